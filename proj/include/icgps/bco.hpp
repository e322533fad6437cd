#pragma once

#include <cstdint>

#include "icgps/env.hpp"

namespace icgps {

// Derived bandit feedback for the risk-equivalent convex objective: an
// auxiliary uniform draw U on [0, x], the indicator Z = 1{D <= U} (computable
// from the censored observation alone), and the payoff
// Y = (h+b) x Z - b x, bounded in [-bB, hB]. Diagnostic machinery only; no
// policy consumes it.
struct DerivedFeedback {
  double u = 0.0;
  bool z = false;
  double y = 0.0;
};

// Z from the censored observation: a stockout forces Z = 0 (demand exceeds
// the order, hence exceeds U); otherwise Z = 1{sales <= u}.
bool z_from_obs(const CensoredObs& obs, double u, double order);

DerivedFeedback derived_feedback(double x, const CensoredObs& obs, Rng& rng,
                                 const CostParams& costs);

// g(x) = (h+b) E[(x-D)^+] - b x; quadrature for continuous families, closed
// form on atoms. Differs from the Bayes risk by the constant b E[D].
double g_objective(const DemandModel& model, double x, const CostParams& costs);

struct UnbiasednessResult {
  double mc_mean = 0.0;
  double mc_se = 0.0;
  double g_value = 0.0;
  bool pass = false;  // |mean - g| <= 3 se
};

UnbiasednessResult unbiasedness_check(const DemandModel& model, double x, const CostParams& costs,
                                      int n_mc, Rng& rng);

}  // namespace icgps
