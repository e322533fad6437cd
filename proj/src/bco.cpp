#include "icgps/bco.hpp"

#include <cmath>
#include <stdexcept>

#include "icgps/math.hpp"

namespace icgps {

bool z_from_obs(const CensoredObs& obs, double u, double order) {
  if (!(u >= 0.0 && u <= order)) throw std::invalid_argument("z_from_obs: u outside [0, order]");
  if (obs.censored) return false;  // demand exceeds the order, hence exceeds u
  return obs.sales <= u;
}

DerivedFeedback derived_feedback(double x, const CensoredObs& obs, Rng& rng,
                                 const CostParams& costs) {
  if (!(x >= 0.0 && x <= costs.bound))
    throw std::invalid_argument("derived_feedback: order outside [0, B]");
  DerivedFeedback f;
  f.u = x == 0.0 ? 0.0 : x * uniform01(rng);
  f.z = z_from_obs(obs, f.u, x);
  f.y = (costs.h + costs.b) * x * (f.z ? 1.0 : 0.0) - costs.b * x;
  return f;
}

double g_objective(const DemandModel& model, double x, const CostParams& costs) {
  if (!(x >= 0.0 && x <= costs.bound))
    throw std::invalid_argument("g_objective: x outside [0, B]");
  double expected_overage;
  if (model.is_discrete()) {
    expected_overage = 0.0;
    if (model.family == DemandFamily::PointMass) {
      expected_overage = std::max(x - model.params[0], 0.0);
    } else {
      for (std::size_t i = 0; i < model.atoms.size(); ++i)
        expected_overage += model.probs[i] * std::max(x - model.atoms[i], 0.0);
    }
  } else {
    // E[(x-D)^+] = int_0^x F(t) dt.
    expected_overage = integrate([&](double t) { return demand_cdf(model, t); }, 0.0, x, 1e-12);
  }
  return (costs.h + costs.b) * expected_overage - costs.b * x;
}

UnbiasednessResult unbiasedness_check(const DemandModel& model, double x, const CostParams& costs,
                                      int n_mc, Rng& rng) {
  if (n_mc < 1000) throw std::invalid_argument("unbiasedness_check: n_mc must be >= 1000");
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    const double d = demand_sample(model, rng, costs.bound);
    const CensoredObs obs = censor(x, d, costs);
    const DerivedFeedback f = derived_feedback(x, obs, rng, costs);
    sum += f.y;
    sumsq += f.y * f.y;
  }
  UnbiasednessResult r;
  const double n = static_cast<double>(n_mc);
  r.mc_mean = sum / n;
  const double var = std::max(0.0, sumsq / n - r.mc_mean * r.mc_mean);
  r.mc_se = std::sqrt(var / n);
  r.g_value = g_objective(model, x, costs);
  const double dev = std::abs(r.mc_mean - r.g_value);
  r.pass = r.mc_se > 0.0 ? dev <= 3.0 * r.mc_se : dev == 0.0;
  return r;
}

}  // namespace icgps
