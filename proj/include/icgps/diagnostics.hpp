#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icgps/env.hpp"
#include "icgps/flow.hpp"

namespace icgps {

struct CheckResult {
  std::string name;
  double statistic;
  double threshold;
  bool pass;
};

// The registered invariant suite behind `icgps_lab check`: gradient vs finite
// differences, flow calibration and tail KS, KM/ECDF equality and the hand
// example, the BCO unbiasedness/convexity/slope grid, and probability
// matching on an enumerable instance.
std::vector<CheckResult> run_all_checks(std::uint64_t seed);

void write_diagnostics_csv(const std::string& path, const std::vector<CheckResult>& results);

// A freshly initialized model with small random weights plus a context drawn
// from a random censored history; shared by the flow checks and tests.
CompletionModel make_random_model(std::uint64_t seed, double bound, int bins = 8,
                                  const std::vector<int>& hidden = {32, 32});
Eigen::VectorXd make_random_context(std::uint64_t seed, double bound);

}  // namespace icgps
