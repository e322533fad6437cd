#pragma once

#include <string>
#include <vector>

#include "icgps/rng.hpp"

namespace icgps {

// Newsvendor cost structure. gamma is always recomputed from (h, b), never
// stored, so it cannot drift out of sync.
struct CostParams {
  double h = 1.0;      // per-unit overage cost
  double b = 1.0;      // per-unit underage cost
  double bound = 1.0;  // demand/action cap B

  CostParams() = default;
  CostParams(double h_, double b_, double bound_);
  double gamma() const { return b / (b + h); }
};

// Sales plus stockout flag. censored == true means a stockout occurred, i.e.
// demand exceeded the order and only the order level was observed. (A
// demand-fully-observed indicator is the complement of this flag.)
struct CensoredObs {
  double sales = 0.0;
  bool censored = false;
};

struct HistoryStep {
  double order = 0.0;
  CensoredObs obs;
};

// The online state: an append-only sequence of (order, observation) pairs.
struct History {
  std::vector<HistoryStep> steps;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  void append(double order, CensoredObs obs) { steps.push_back({order, obs}); }
  const HistoryStep& back() const { return steps.back(); }
};

enum class DemandFamily {
  Weibull,      // CDF 1 - exp(-rate * d^shape), params = {rate, shape}
  Exponential,  // params = {rate}
  LogNormal,    // params = {mu, sigma} of log demand
  Gompertz,     // CDF 1 - exp(-(eta/beta)(e^{beta d} - 1)), params = {eta, beta}
  LogLogistic,  // CDF 1 / (1 + (d/alpha)^-beta), params = {alpha, beta}
  PointMass,    // params = {d0}
  DiscreteFinite,
};

std::string family_name(DemandFamily f);
DemandFamily family_from_name(const std::string& name);

// One demand law. Continuous families use `params`; DiscreteFinite uses
// atoms/probs (probs need not be pre-normalized; the constructor normalizes).
struct DemandModel {
  DemandFamily family = DemandFamily::PointMass;
  std::vector<double> params;
  std::vector<double> atoms;
  std::vector<double> probs;

  static DemandModel weibull(double rate, double shape);
  static DemandModel exponential(double rate);
  static DemandModel lognormal(double mu, double sigma);
  static DemandModel gompertz(double eta, double beta);
  static DemandModel loglogistic(double alpha, double beta);
  static DemandModel point_mass(double d0);
  static DemandModel discrete(std::vector<double> atoms, std::vector<double> probs);

  bool is_discrete() const {
    return family == DemandFamily::PointMass || family == DemandFamily::DiscreteFinite;
  }
};

void validate(const DemandModel& model);

double demand_cdf(const DemandModel& model, double d);
// Generalized left inverse of the CDF; u must lie in (0, 1).
double demand_quantile(const DemandModel& model, double u);
// Continuous families only; throws for PointMass/DiscreteFinite.
double demand_density(const DemandModel& model, double d);
// Inverse-transform sample clamped to [0, bound].
double demand_sample(const DemandModel& model, Rng& rng, double bound);
// Mean of the (unclamped) law, closed form where available else quadrature.
double demand_mean(const DemandModel& model);

// Newsvendor loss h*(x-d)_+ + b*(d-x)_+. Arguments must lie in [0, B].
double loss(double x, double d, const CostParams& costs);

// Censoring map: sales = min(d, x), censored = (d > x).
CensoredObs censor(double x, double d, const CostParams& costs);

// Left gamma-quantile of the model CDF clamped to [0, bound].
double optimal_order(const DemandModel& model, const CostParams& costs);

// loss(x, d) - loss(xstar, d); may be negative per step.
double realized_regret_step(double x, double xstar, double d, const CostParams& costs);

// Bayes risk E[loss(x, D)] under the model, adaptive quadrature for the
// continuous part (abs tol 1e-8).
double bayes_risk(const DemandModel& model, double x, const CostParams& costs);

// Parameter specification used by task priors.
struct ParamSpec {
  enum class Kind { Fixed, Uniform, Gamma } kind = Kind::Fixed;
  double a = 0.0;  // Fixed: value; Uniform: lo; Gamma: shape
  double b = 0.0;  // Uniform: hi; Gamma: rate

  static ParamSpec fixed(double v) { return {Kind::Fixed, v, 0.0}; }
  static ParamSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static ParamSpec gamma(double shape, double rate) { return {Kind::Gamma, shape, rate}; }

  double sample(Rng& rng) const;
  double median() const;
};

struct FamilySpec {
  DemandFamily family = DemandFamily::Weibull;
  std::vector<ParamSpec> params;
};

// Prior over tasks: a uniform mixture over family specs with per-parameter
// laws. Sampling always yields a valid DemandModel.
struct TaskPrior {
  std::vector<FamilySpec> families;

  // 0.9999 quantile of the prior-median task, maximized over families.
  // Used as the default demand/action bound so clamping is negligible.
  double default_bound() const;
};

DemandModel sample_task(const TaskPrior& prior, Rng& rng);
DemandModel median_task(const FamilySpec& spec);

}  // namespace icgps
