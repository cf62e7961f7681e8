#include "criteria.hpp"

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

// Runs every acceptance criterion (or the ids given as arguments) and exits
// non-zero when any fails.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));
  const int failures = vbl::acceptance::run_criteria(only, std::cout);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
