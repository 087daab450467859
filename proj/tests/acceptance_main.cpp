#include <cstring>
#include <iostream>

#include "pgflow/acceptance.hpp"

// One verdict line per criterion; --verbose adds the metric tables.
int main(int argc, char** argv) {
  const bool verbose = argc > 1 && std::strcmp(argv[1], "--verbose") == 0;
  const pgflow::AcceptanceThresholds thresholds;
  bool all = true;
  for (const auto& outcome : pgflow::run_acceptance(thresholds)) {
    std::cout << pgflow::verdict_line(outcome) << std::endl;
    if (verbose) std::cout << outcome.report.summary();
    all = all && outcome.pass;
  }
  return all ? 0 : 1;
}
