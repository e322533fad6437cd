#include "icgps/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "icgps/math.hpp"

namespace icgps {

CostParams::CostParams(double h_, double b_, double bound_) : h(h_), b(b_), bound(bound_) {
  if (!(h > 0.0)) throw std::invalid_argument("CostParams: h must be positive");
  if (!(b > 0.0)) throw std::invalid_argument("CostParams: b must be positive");
  if (!(bound > 0.0)) throw std::invalid_argument("CostParams: bound must be positive");
}

std::string family_name(DemandFamily f) {
  switch (f) {
    case DemandFamily::Weibull: return "weibull";
    case DemandFamily::Exponential: return "exponential";
    case DemandFamily::LogNormal: return "lognormal";
    case DemandFamily::Gompertz: return "gompertz";
    case DemandFamily::LogLogistic: return "loglogistic";
    case DemandFamily::PointMass: return "pointmass";
    case DemandFamily::DiscreteFinite: return "discrete";
  }
  throw std::logic_error("family_name: unknown family");
}

DemandFamily family_from_name(const std::string& name) {
  if (name == "weibull") return DemandFamily::Weibull;
  if (name == "exponential") return DemandFamily::Exponential;
  if (name == "lognormal") return DemandFamily::LogNormal;
  if (name == "gompertz") return DemandFamily::Gompertz;
  if (name == "loglogistic") return DemandFamily::LogLogistic;
  if (name == "pointmass") return DemandFamily::PointMass;
  if (name == "discrete") return DemandFamily::DiscreteFinite;
  throw std::invalid_argument("unknown demand family: " + name);
}

DemandModel DemandModel::weibull(double rate, double shape) {
  DemandModel m{DemandFamily::Weibull, {rate, shape}, {}, {}};
  validate(m);
  return m;
}
DemandModel DemandModel::exponential(double rate) {
  DemandModel m{DemandFamily::Exponential, {rate}, {}, {}};
  validate(m);
  return m;
}
DemandModel DemandModel::lognormal(double mu, double sigma) {
  DemandModel m{DemandFamily::LogNormal, {mu, sigma}, {}, {}};
  validate(m);
  return m;
}
DemandModel DemandModel::gompertz(double eta, double beta) {
  DemandModel m{DemandFamily::Gompertz, {eta, beta}, {}, {}};
  validate(m);
  return m;
}
DemandModel DemandModel::loglogistic(double alpha, double beta) {
  DemandModel m{DemandFamily::LogLogistic, {alpha, beta}, {}, {}};
  validate(m);
  return m;
}
DemandModel DemandModel::point_mass(double d0) {
  DemandModel m{DemandFamily::PointMass, {d0}, {}, {}};
  validate(m);
  return m;
}

DemandModel DemandModel::discrete(std::vector<double> atoms, std::vector<double> probs) {
  if (atoms.empty() || atoms.size() != probs.size())
    throw std::invalid_argument("DemandModel::discrete: atoms/probs size mismatch");
  // Sort atoms ascending, keep probs aligned, normalize.
  std::vector<std::size_t> idx(atoms.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
  DemandModel m;
  m.family = DemandFamily::DiscreteFinite;
  double total = 0.0;
  for (std::size_t i : idx) {
    if (atoms[i] < 0.0) throw std::invalid_argument("discrete atom below 0");
    if (probs[i] < 0.0) throw std::invalid_argument("negative atom probability");
    m.atoms.push_back(atoms[i]);
    m.probs.push_back(probs[i]);
    total += probs[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument("discrete probabilities sum to 0");
  for (double& p : m.probs) p /= total;
  return m;
}

void validate(const DemandModel& model) {
  auto positive = [&](std::size_t i) {
    if (model.params.size() <= i || !(model.params[i] > 0.0) || !std::isfinite(model.params[i]))
      throw std::invalid_argument("DemandModel: parameter " + std::to_string(i) +
                                  " must be positive and finite");
  };
  switch (model.family) {
    case DemandFamily::Weibull:
    case DemandFamily::Gompertz:
    case DemandFamily::LogLogistic:
      positive(0);
      positive(1);
      break;
    case DemandFamily::Exponential:
      positive(0);
      break;
    case DemandFamily::LogNormal:
      if (model.params.size() < 2 || !std::isfinite(model.params[0]))
        throw std::invalid_argument("DemandModel: lognormal mu must be finite");
      positive(1);
      break;
    case DemandFamily::PointMass:
      if (model.params.empty() || model.params[0] < 0.0)
        throw std::invalid_argument("DemandModel: point mass must be >= 0");
      break;
    case DemandFamily::DiscreteFinite:
      if (model.atoms.empty() || model.atoms.size() != model.probs.size())
        throw std::invalid_argument("DemandModel: empty discrete support");
      break;
  }
}

double demand_cdf(const DemandModel& m, double d) {
  if (d < 0.0) return 0.0;
  switch (m.family) {
    case DemandFamily::Weibull:
      return -std::expm1(-m.params[0] * std::pow(d, m.params[1]));
    case DemandFamily::Exponential:
      return -std::expm1(-m.params[0] * d);
    case DemandFamily::LogNormal:
      if (d == 0.0) return 0.0;
      return normal_cdf((std::log(d) - m.params[0]) / m.params[1]);
    case DemandFamily::Gompertz: {
      const double eta = m.params[0], beta = m.params[1];
      return -std::expm1(-(eta / beta) * std::expm1(beta * d));
    }
    case DemandFamily::LogLogistic: {
      if (d == 0.0) return 0.0;
      const double alpha = m.params[0], beta = m.params[1];
      return 1.0 / (1.0 + std::pow(d / alpha, -beta));
    }
    case DemandFamily::PointMass:
      return d >= m.params[0] ? 1.0 : 0.0;
    case DemandFamily::DiscreteFinite: {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.atoms.size() && m.atoms[i] <= d; ++i) acc += m.probs[i];
      return acc;
    }
  }
  throw std::logic_error("demand_cdf: unknown family");
}

double demand_quantile(const DemandModel& m, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("demand_quantile: u outside (0,1)");
  switch (m.family) {
    case DemandFamily::Weibull:
      return std::pow(-std::log1p(-u) / m.params[0], 1.0 / m.params[1]);
    case DemandFamily::Exponential:
      return -std::log1p(-u) / m.params[0];
    case DemandFamily::LogNormal:
      return std::exp(m.params[0] + m.params[1] * normal_quantile(u));
    case DemandFamily::Gompertz: {
      const double eta = m.params[0], beta = m.params[1];
      return std::log1p(-(beta / eta) * std::log1p(-u)) / beta;
    }
    case DemandFamily::LogLogistic: {
      const double alpha = m.params[0], beta = m.params[1];
      return alpha * std::pow(u / (1.0 - u), 1.0 / beta);
    }
    case DemandFamily::PointMass:
      return m.params[0];
    case DemandFamily::DiscreteFinite: {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.atoms.size(); ++i) {
        acc += m.probs[i];
        if (acc >= u) return m.atoms[i];
      }
      return m.atoms.back();
    }
  }
  throw std::logic_error("demand_quantile: unknown family");
}

double demand_density(const DemandModel& m, double d) {
  if (m.is_discrete())
    throw std::invalid_argument("demand_density: discrete law has no density");
  if (d < 0.0) return 0.0;
  switch (m.family) {
    case DemandFamily::Weibull: {
      const double rate = m.params[0], k = m.params[1];
      if (d == 0.0) return k > 1.0 ? 0.0 : (k == 1.0 ? rate : 0.0);
      return rate * k * std::pow(d, k - 1.0) * std::exp(-rate * std::pow(d, k));
    }
    case DemandFamily::Exponential:
      return m.params[0] * std::exp(-m.params[0] * d);
    case DemandFamily::LogNormal: {
      if (d == 0.0) return 0.0;
      const double z = (std::log(d) - m.params[0]) / m.params[1];
      return normal_pdf(z) / (d * m.params[1]);
    }
    case DemandFamily::Gompertz: {
      const double eta = m.params[0], beta = m.params[1];
      return eta * std::exp(beta * d) * std::exp(-(eta / beta) * std::expm1(beta * d));
    }
    case DemandFamily::LogLogistic: {
      if (d == 0.0) return 0.0;
      const double alpha = m.params[0], beta = m.params[1];
      const double r = std::pow(d / alpha, beta);
      return (beta / d) * r / ((1.0 + r) * (1.0 + r));
    }
    default:
      throw std::logic_error("demand_density: unexpected family");
  }
}

double demand_sample(const DemandModel& m, Rng& rng, double bound) {
  const double d = demand_quantile(m, uniform_open01(rng));
  return std::clamp(d, 0.0, bound);
}

double demand_mean(const DemandModel& m) {
  switch (m.family) {
    case DemandFamily::Weibull:
      return std::pow(m.params[0], -1.0 / m.params[1]) * std::tgamma(1.0 + 1.0 / m.params[1]);
    case DemandFamily::Exponential:
      return 1.0 / m.params[0];
    case DemandFamily::LogNormal:
      return std::exp(m.params[0] + 0.5 * m.params[1] * m.params[1]);
    case DemandFamily::PointMass:
      return m.params[0];
    case DemandFamily::DiscreteFinite: {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.atoms.size(); ++i) acc += m.atoms[i] * m.probs[i];
      return acc;
    }
    default: {
      // E[D] = int_0^inf (1 - F) for nonnegative demand.
      const double hi = demand_quantile(m, 1.0 - 1e-12);
      return integrate([&](double t) { return 1.0 - demand_cdf(m, t); }, 0.0, hi, 1e-10);
    }
  }
}

namespace {
void check_domain(double v, double bound, const char* what) {
  if (!(v >= 0.0 && v <= bound))
    throw std::invalid_argument(std::string(what) + " outside [0, B]");
}
}  // namespace

double loss(double x, double d, const CostParams& costs) {
  check_domain(x, costs.bound, "loss: order");
  check_domain(d, costs.bound, "loss: demand");
  return costs.h * std::max(x - d, 0.0) + costs.b * std::max(d - x, 0.0);
}

CensoredObs censor(double x, double d, const CostParams& costs) {
  check_domain(x, costs.bound, "censor: order");
  check_domain(d, costs.bound, "censor: demand");
  return {std::min(d, x), d > x};
}

double optimal_order(const DemandModel& model, const CostParams& costs) {
  return std::clamp(demand_quantile(model, costs.gamma()), 0.0, costs.bound);
}

double realized_regret_step(double x, double xstar, double d, const CostParams& costs) {
  return loss(x, d, costs) - loss(xstar, d, costs);
}

double bayes_risk(const DemandModel& model, double x, const CostParams& costs) {
  const double B = costs.bound;
  if (model.is_discrete()) {
    double acc = 0.0;
    if (model.family == DemandFamily::PointMass) return loss(x, std::min(model.params[0], B), costs);
    for (std::size_t i = 0; i < model.atoms.size(); ++i)
      acc += model.probs[i] * loss(x, std::min(model.atoms[i], B), costs);
    return acc;
  }
  // E[(x-D)^+] = int_0^x F, E[(D-x)^+] = int_x^B (1-F) for D clamped to [0,B].
  const double over = integrate([&](double t) { return demand_cdf(model, t); }, 0.0, x, 1e-8);
  const double under = integrate([&](double t) { return 1.0 - demand_cdf(model, t); }, x, B, 1e-8);
  return costs.h * over + costs.b * under;
}

double ParamSpec::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Fixed: return a;
    case Kind::Uniform: return uniform_in(rng, a, b);
    case Kind::Gamma: return gamma_sample(rng, a, b);
  }
  throw std::logic_error("ParamSpec::sample");
}

double ParamSpec::median() const {
  switch (kind) {
    case Kind::Fixed: return a;
    case Kind::Uniform: return 0.5 * (a + b);
    case Kind::Gamma: return gamma_quantile(a, b, 0.5);
  }
  throw std::logic_error("ParamSpec::median");
}

namespace {
DemandModel build_model(DemandFamily family, const std::vector<double>& params) {
  DemandModel m{family, params, {}, {}};
  validate(m);
  return m;
}
}  // namespace

DemandModel median_task(const FamilySpec& spec) {
  std::vector<double> params;
  for (const auto& p : spec.params) params.push_back(p.median());
  return build_model(spec.family, params);
}

double TaskPrior::default_bound() const {
  if (families.empty()) throw std::invalid_argument("TaskPrior: no families");
  double bound = 0.0;
  for (const auto& spec : families) {
    const DemandModel med = median_task(spec);
    double q;
    if (med.family == DemandFamily::PointMass)
      q = med.params[0] * 1.5 + 1.0;
    else if (med.family == DemandFamily::DiscreteFinite)
      q = med.atoms.back();
    else
      q = demand_quantile(med, 0.9999);
    bound = std::max(bound, q);
  }
  return bound;
}

DemandModel sample_task(const TaskPrior& prior, Rng& rng) {
  if (prior.families.empty()) throw std::invalid_argument("sample_task: empty prior");
  const std::size_t j =
      prior.families.size() == 1
          ? 0
          : std::min<std::size_t>(prior.families.size() - 1,
                                  static_cast<std::size_t>(uniform01(rng) * prior.families.size()));
  const FamilySpec& spec = prior.families[j];
  std::vector<double> params;
  for (const auto& p : spec.params) params.push_back(p.sample(rng));
  return build_model(spec.family, params);
}

}  // namespace icgps
