#include "icgps/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "icgps/bco.hpp"
#include "icgps/csv.hpp"
#include "icgps/math.hpp"
#include "icgps/policy.hpp"
#include "icgps/survival.hpp"

namespace icgps {

CompletionModel make_random_model(std::uint64_t seed, double bound, int bins,
                                  const std::vector<int>& hidden) {
  CompletionModel model;
  model.shape = FlowShape{bins, 4.0, bound};
  Rng rng = make_rng(seed, "random-model");
  model.net = HyperNetwork::init(kContextDim, hidden, model.shape, rng);
  return model;
}

Eigen::VectorXd make_random_context(std::uint64_t seed, double bound) {
  Rng rng = make_rng(seed, "random-context");
  const DemandModel task = DemandModel::weibull(uniform_in(rng, 0.3, 0.8), uniform_in(rng, 1.0, 2.0));
  const int len = static_cast<int>(uniform01(rng) * 40.0);
  CostParams domain(1.0, 1.0, bound);
  History h;
  for (int t = 0; t < len; ++t) {
    const double d = demand_sample(task, rng, bound);
    const double x = uniform01(rng) < 0.1 ? bound : uniform_in(rng, 0.0, bound);
    h.append(x, censor(x, d, domain));
  }
  return encode_context(h, bound);
}

namespace {

CheckResult check_gradients(std::uint64_t seed) {
  const double B = 8.0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const CompletionModel base = make_random_model(derive_seed(seed, "grad-model", trial), B);
    const Eigen::VectorXd ctx = make_random_context(derive_seed(seed, "grad-ctx", trial), B);
    Rng rng = make_rng(seed, "grad-obs", trial);
    const bool censored = uniform01(rng) < 0.4;
    const double order = uniform_in(rng, 0.5, B - 0.5);
    const CensoredObs obs =
        censored ? CensoredObs{order, true} : CensoredObs{uniform_in(rng, 0.05, B - 0.05), false};

    CompletionModel model = base;
    NetGrad grad = NetGrad::zeros_like(model.net);
    FlowWorkspace ws;
    censored_nll_grad(model, ctx, order, obs, grad, ws);

    const double step = 1e-5;
    for (std::size_t l = 0; l < model.net.weights.size(); ++l) {
      // Probe a deterministic subset of weights per layer to keep the check
      // fast; every parameter class (weights, biases, all layers) is hit.
      const long rows = model.net.weights[l].rows(), cols = model.net.weights[l].cols();
      for (int probe = 0; probe < 12; ++probe) {
        const long r = static_cast<long>(rng() % static_cast<std::uint64_t>(rows));
        const long c = static_cast<long>(rng() % static_cast<std::uint64_t>(cols));
        const double saved = model.net.weights[l](r, c);
        model.net.weights[l](r, c) = saved + step;
        const double up = censored_nll(model, ctx, order, obs);
        model.net.weights[l](r, c) = saved - step;
        const double dn = censored_nll(model, ctx, order, obs);
        model.net.weights[l](r, c) = saved;
        const double fd = (up - dn) / (2.0 * step);
        const double an = grad.weights[l](r, c);
        if (std::abs(an) > 1e-8 || std::abs(fd) > 1e-8)
          worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
      }
      const long bn = model.net.biases[l].size();
      for (int probe = 0; probe < 6; ++probe) {
        const long r = static_cast<long>(rng() % static_cast<std::uint64_t>(bn));
        const double saved = model.net.biases[l](r);
        model.net.biases[l](r) = saved + step;
        const double up = censored_nll(model, ctx, order, obs);
        model.net.biases[l](r) = saved - step;
        const double dn = censored_nll(model, ctx, order, obs);
        model.net.biases[l](r) = saved;
        const double fd = (up - dn) / (2.0 * step);
        const double an = grad.biases[l](r);
        if (std::abs(an) > 1e-8 || std::abs(fd) > 1e-8)
          worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
      }
    }
  }
  return {"gradient_fd_rel_err", worst, 1e-4, worst < 1e-4};
}

CheckResult check_flow_roundtrip(std::uint64_t seed) {
  const double B = 8.0;
  double worst = 0.0;
  for (int m = 0; m < 10; ++m) {
    const CompletionModel model = make_random_model(derive_seed(seed, "rt-model", m), B);
    const Eigen::VectorXd ctx = make_random_context(derive_seed(seed, "rt-ctx", m), B);
    for (int i = 1; i <= 99; ++i) {
      const double u = i / 100.0;
      const double d = flow_quantile(model, ctx, u);
      if (d <= 0.0 || d >= B) continue;  // clamped outside the invertible range
      worst = std::max(worst, std::abs(flow_cdf(model, ctx, d) - u));
    }
  }
  return {"flow_roundtrip_abs_err", worst, 1e-6, worst < 1e-6};
}

CheckResult check_flow_density_norm(std::uint64_t seed) {
  const double B = 8.0;
  double worst = 0.0;
  const int n = 10000;
  for (int m = 0; m < 10; ++m) {
    const CompletionModel model = make_random_model(derive_seed(seed, "norm-model", m), B);
    const Eigen::VectorXd ctx = make_random_context(derive_seed(seed, "norm-ctx", m), B);
    double acc = 0.0;
    double prev = std::exp(flow_log_density(model, ctx, 0.0));
    for (int i = 1; i <= n; ++i) {
      const double d = B * i / n;
      const double cur = std::exp(flow_log_density(model, ctx, d));
      acc += 0.5 * (prev + cur) * (B / n);
      prev = cur;
    }
    worst = std::max(worst, std::abs(acc - 1.0));
  }
  return {"flow_density_norm_err", worst, 1e-3, worst < 1e-3};
}

CheckResult check_flow_cdf_density(std::uint64_t seed) {
  const double B = 8.0;
  double worst = 0.0;
  for (int m = 0; m < 5; ++m) {
    const CompletionModel model = make_random_model(derive_seed(seed, "cd-model", m), B);
    const Eigen::VectorXd ctx = make_random_context(derive_seed(seed, "cd-ctx", m), B);
    const double h = 1e-5;
    for (int i = 1; i <= 100; ++i) {
      const double d = B * i / 101.0;
      const double fd = (flow_cdf(model, ctx, d + h) - flow_cdf(model, ctx, d - h)) / (2.0 * h);
      const double f = std::exp(flow_log_density(model, ctx, d));
      worst = std::max(worst, std::abs(fd - f));
    }
  }
  return {"flow_cdf_density_consistency", worst, 1e-4, worst < 1e-4};
}

std::pair<CheckResult, CheckResult> check_tail(std::uint64_t seed) {
  const double B = 8.0;
  long violations = 0;
  double worst_ks = 0.0;
  const int n = 10000;
  std::vector<double> samples(n);
  for (int m = 0; m < 10; ++m) {
    const CompletionModel model = make_random_model(derive_seed(seed, "tail-model", m), B);
    const Eigen::VectorXd ctx = make_random_context(derive_seed(seed, "tail-ctx", m), B);
    Rng rng = make_rng(seed, "tail-draws", m);
    const double x = uniform_in(rng, 0.5, 0.75 * B);
    const double fx = flow_cdf(model, ctx, x);
    if (1.0 - fx < 1e-4) continue;  // keep the analytic comparison well-posed
    for (int i = 0; i < n; ++i) {
      const auto d = tail_sample(model, ctx, x, rng);
      if (!d || *d <= x) {
        ++violations;
        samples[static_cast<std::size_t>(i)] = x;
        continue;
      }
      samples[static_cast<std::size_t>(i)] = *d;
    }
    std::sort(samples.begin(), samples.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = samples[static_cast<std::size_t>(i)];
      const double analytic = (flow_cdf(model, ctx, z) - fx) / (1.0 - fx);
      ks = std::max(ks, std::abs(analytic - (i + 1.0) / n));
      ks = std::max(ks, std::abs(analytic - static_cast<double>(i) / n));
    }
    worst_ks = std::max(worst_ks, ks);
  }
  return {CheckResult{"tail_sample_above_threshold_violations", static_cast<double>(violations),
                      0.0, violations == 0},
          CheckResult{"tail_sample_ks", worst_ks, 0.02, worst_ks < 0.02}};
}

std::pair<CheckResult, CheckResult> check_km(std::uint64_t seed) {
  // No censoring: KM survival equals the empirical (n-k)/n exactly.
  Rng rng = make_rng(seed, "km-ecdf");
  double ecdf_dev = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 40.0);
    History h;
    std::vector<double> vals;
    CostParams domain(1.0, 1.0, 10.0);
    for (int i = 0; i < n; ++i) {
      const double d = uniform_in(rng, 0.0, 9.0);
      vals.push_back(d);
      h.append(10.0, censor(10.0, d, domain));
    }
    const KMEstimator est = km_fit(h);
    std::sort(vals.begin(), vals.end());
    for (int k = 0; k < n; ++k) {
      const double expect = static_cast<double>(n - (k + 1)) / static_cast<double>(n);
      const double got = est.survival(vals[static_cast<std::size_t>(k)]);
      ecdf_dev = std::max(ecdf_dev, std::abs(got - expect));
    }
  }
  // Hand product-limit example: events {1,3}, censored {2}.
  History h;
  h.append(5.0, {1.0, false});
  h.append(2.0, {2.0, true});
  h.append(5.0, {3.0, false});
  const KMEstimator est = km_fit(h);
  double hand_dev = std::abs(est.survival(1.0) - 2.0 / 3.0);
  hand_dev = std::max(hand_dev, std::abs(est.survival(2.5) - 2.0 / 3.0));
  hand_dev = std::max(hand_dev, std::abs(est.survival(3.0) - 0.0));
  return {CheckResult{"km_ecdf_max_dev", ecdf_dev, 0.0, ecdf_dev == 0.0},
          CheckResult{"km_hand_example_dev", hand_dev, 1e-15, hand_dev <= 1e-15}};
}

std::vector<CheckResult> check_bco(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const double B = 8.0;
  const std::vector<DemandModel> models = {
      DemandModel::weibull(0.5, 1.5),   DemandModel::exponential(0.6),
      DemandModel::lognormal(0.2, 0.5), DemandModel::gompertz(0.3, 0.4),
      DemandModel::loglogistic(1.5, 2.5)};
  const std::vector<std::pair<double, double>> cost_grid = {{1.0, 1.0}, {1.0, 9.0}};
  const std::vector<double> x_grid = {0.8, 2.0, 4.5};

  double worst_dev = 0.0;  // in units of SE
  int cell = 0;
  for (const auto& model : models) {
    for (const auto& [h, b] : cost_grid) {
      for (const double x : x_grid) {
        const CostParams costs(h, b, B);
        Rng rng = make_rng(seed, "bco-cell", static_cast<std::uint64_t>(cell++));
        const UnbiasednessResult r = unbiasedness_check(model, x, costs, 100000, rng);
        if (r.mc_se > 0.0) worst_dev = std::max(worst_dev, std::abs(r.mc_mean - r.g_value) / r.mc_se);
      }
    }
  }
  out.push_back({"bco_unbiasedness_max_dev_se", worst_dev, 3.0, worst_dev <= 3.0});

  // Convexity and slope bounds of g on a grid.
  double min_second_diff = 0.0;
  double slope_excess = 0.0;
  const CostParams costs(1.0, 3.0, B);
  for (const auto& model : models) {
    const int n = 200;
    std::vector<double> g(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) g[static_cast<std::size_t>(i)] = g_objective(model, B * i / n, costs);
    const double dx = B / n;
    for (int i = 1; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      min_second_diff = std::min(min_second_diff, g[k + 1] - 2.0 * g[k] + g[k - 1]);
    }
    for (int i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      const double slope = (g[k + 1] - g[k]) / dx;
      slope_excess = std::max(slope_excess, std::max(slope - costs.h, -costs.b - slope));
    }
  }
  out.push_back({"bco_g_min_second_diff", min_second_diff, -1e-8, min_second_diff >= -1e-8});
  out.push_back({"bco_g_slope_excess", slope_excess, 1e-6, slope_excess <= 1e-6});
  return out;
}

CheckResult check_probability_matching(std::uint64_t seed) {
  // Two finite tasks, a short horizon, a partially censored history.
  const std::vector<DemandModel> tasks = {
      DemandModel::discrete({1.0, 2.0, 3.0}, {0.5, 0.3, 0.2}),
      DemandModel::discrete({1.0, 2.0, 3.0}, {0.2, 0.3, 0.5})};
  const std::vector<double> prior = {0.5, 0.5};
  const int T = 5;
  const double gamma = 0.6;
  History h;
  h.append(2.0, {2.0, true});   // stockout at 2
  h.append(3.0, {1.0, false});  // revealed demand 1

  const ActionLaw exact = exact_gps_discrete(tasks, prior, h, gamma, T);
  Rng rng = make_rng(seed, "probmatch");
  std::map<double, double> mc;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto completion = sample_true_kernel_completion(tasks, prior, h, T, rng);
    mc[oracle_quantile(completion, gamma)] += 1.0 / n;
  }
  ActionLaw mc_law;
  for (const auto& [a, p] : mc) {
    mc_law.actions.push_back(a);
    mc_law.probs.push_back(p);
  }
  const double tv = total_variation(exact, mc_law);
  return {"probability_matching_tv", tv, 0.02, tv < 0.02};
}

}  // namespace

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_gradients(seed));
  results.push_back(check_flow_roundtrip(seed));
  results.push_back(check_flow_density_norm(seed));
  results.push_back(check_flow_cdf_density(seed));
  {
    auto [violations, ks] = check_tail(seed);
    results.push_back(violations);
    results.push_back(ks);
  }
  {
    auto [ecdf, hand] = check_km(seed);
    results.push_back(ecdf);
    results.push_back(hand);
  }
  for (auto& r : check_bco(seed)) results.push_back(r);
  results.push_back(check_probability_matching(seed));
  return results;
}

void write_diagnostics_csv(const std::string& path, const std::vector<CheckResult>& results) {
  CsvWriter writer(path, {"check_name", "statistic", "threshold", "pass"});
  for (const auto& r : results)
    writer.row({r.name, fmt_double(r.statistic), fmt_double(r.threshold), r.pass ? "1" : "0"});
}

}  // namespace icgps
