// Acceptance suite: one numbered criterion per invocation (or all when no
// filter argument is given). Prints one PASS/FAIL line per criterion.
#include <cstdlib>
#include <iostream>
#include <string>

int run_criterion(int n);

int main(int argc, char** argv) {
  if (argc > 1) return run_criterion(std::atoi(argv[1]));
  int failures = 0;
  for (int n = 1; n <= 12; ++n) failures += run_criterion(n) != 0;
  return failures == 0 ? 0 : 1;
}

int run_criterion(int n) {
  std::cout << "[SKIP] criterion " << n << ": not yet implemented\n";
  return 1;
}
