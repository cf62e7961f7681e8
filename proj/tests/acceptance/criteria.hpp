#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace vbl::acceptance {

// Outcome of one criterion body: whether its numeric checks held, and a short
// human-readable summary of the measured quantities.
struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id = 0;
  std::string name;
  double budget_seconds = 0.0;  // the criterion also fails when it runs longer
  std::function<Outcome()> body;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  bool within_budget = false;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::string detail;
};

const std::vector<Criterion>& all_criteria();

// Runs one criterion, timing it; an exception is a failure with its message
// as the detail.
CriterionResult run_criterion(const Criterion& c);

// One line per criterion: "[PASS] 07 <name>: <detail> (<t> s / <budget> s)".
std::string format_result(const CriterionResult& r);

// Runs the criteria whose ids are in `only` (all when empty), printing each
// line as it finishes.  Returns the number of failures.
int run_criteria(const std::vector<int>& only, std::ostream& out);

}  // namespace vbl::acceptance
