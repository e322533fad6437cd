#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icgps/env.hpp"
#include "icgps/math.hpp"

using namespace icgps;

namespace {

// Independent quantile oracle: bisection on the CDF.
double bisect_quantile(const DemandModel& m, double u, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (demand_cdf(m, mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Independent Bayes-risk oracle: cell-wise adaptive quadrature accumulated
// over a grid, so each grid value carries abs error well under 1e-8.
std::vector<double> risk_grid(const DemandModel& m, const CostParams& costs, int n_cells) {
  const double B = costs.bound;
  std::vector<double> cum_f(static_cast<std::size_t>(n_cells + 1), 0.0);
  std::vector<double> cum_s(static_cast<std::size_t>(n_cells + 1), 0.0);
  for (int i = 0; i < n_cells; ++i) {
    const double a = B * i / n_cells, b = B * (i + 1) / n_cells;
    cum_f[static_cast<std::size_t>(i + 1)] =
        cum_f[static_cast<std::size_t>(i)] +
        integrate([&](double t) { return demand_cdf(m, t); }, a, b, 1e-12);
    cum_s[static_cast<std::size_t>(i + 1)] =
        cum_s[static_cast<std::size_t>(i)] +
        integrate([&](double t) { return 1.0 - demand_cdf(m, t); }, a, b, 1e-12);
  }
  std::vector<double> risk(static_cast<std::size_t>(n_cells + 1));
  for (int i = 0; i <= n_cells; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    risk[k] = costs.h * cum_f[k] + costs.b * (cum_s.back() - cum_s[k]);
  }
  return risk;
}

}  // namespace

TEST_CASE("special functions") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  for (double p : {0.001, 0.025, 0.2, 0.5, 0.84, 0.999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  // Regularized incomplete gamma against the exponential special case
  // P(1, x) = 1 - exp(-x).
  for (double x : {0.1, 0.7, 2.5, 9.0})
    CHECK(gamma_p(1.0, x) == doctest::Approx(1.0 - std::exp(-x)).epsilon(1e-12));
  CHECK(gamma_quantile(1.0, 2.0, 0.5) == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-9));
  // Quadrature on a known integral.
  CHECK(integrate([](double t) { return std::sin(t); }, 0.0, kPi, 1e-12) ==
        doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("loss definition and domain") {
  const CostParams costs(1.0, 2.0, 10.0);
  CHECK(loss(5.0, 3.0, costs) == 2.0);
  CHECK(loss(3.0, 5.0, costs) == 4.0);
  CHECK(loss(4.0, 4.0, costs) == 0.0);
  CHECK_THROWS_AS(loss(-1.0, 3.0, costs), std::invalid_argument);
  CHECK_THROWS_AS(loss(3.0, 11.0, costs), std::invalid_argument);

  // loss >= 0 with equality iff x == d
  Rng rng = make_rng(7, "loss-prop");
  for (int i = 0; i < 200; ++i) {
    const double x = uniform_in(rng, 0.0, 10.0), d = uniform_in(rng, 0.0, 10.0);
    const double l = loss(x, d, costs);
    CHECK(l >= 0.0);
    if (x != d) CHECK(l > 0.0);
  }
  CHECK(CostParams(1.0, 2.0, 5.0).gamma() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("censor map") {
  const CostParams costs(1.0, 1.0, 10.0);
  auto o1 = censor(4.0, 6.0, costs);
  CHECK(o1.sales == 4.0);
  CHECK(o1.censored);
  auto o2 = censor(4.0, 2.0, costs);
  CHECK(o2.sales == 2.0);
  CHECK_FALSE(o2.censored);
  auto o3 = censor(4.0, 4.0, costs);
  CHECK(o3.sales == 4.0);
  CHECK_FALSE(o3.censored);

  // Round trip: uncensored reveals demand exactly; censored implies d > x.
  Rng rng = make_rng(11, "censor-prop");
  for (int i = 0; i < 500; ++i) {
    const double x = uniform_in(rng, 0.0, 10.0), d = uniform_in(rng, 0.0, 10.0);
    const auto o = censor(x, d, costs);
    if (o.censored) {
      CHECK(d > x);
      CHECK(o.sales == x);
    } else {
      CHECK(o.sales == d);
    }
  }
}

TEST_CASE("demand families: cdf, quantile, density") {
  const DemandModel w = DemandModel::weibull(0.5, 1.5);
  CHECK(demand_cdf(w, 1.0) == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-12));
  CHECK(demand_quantile(w, 0.9) == doctest::Approx(bisect_quantile(w, 0.9, 0.0, 100.0)).epsilon(1e-9));
  CHECK(demand_quantile(w, 0.9) == doctest::Approx(2.7683).epsilon(1e-4));
  CHECK_THROWS_AS(demand_quantile(w, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(demand_quantile(w, 1.0), std::invalid_argument);

  const DemandModel pm = DemandModel::point_mass(1.0);
  CHECK(demand_quantile(pm, 0.3) == 1.0);
  CHECK(demand_quantile(pm, 0.97) == 1.0);

  const std::vector<DemandModel> continuous = {
      DemandModel::weibull(0.5, 1.5),  DemandModel::exponential(0.7),
      DemandModel::lognormal(0.3, 0.6), DemandModel::gompertz(0.4, 0.5),
      DemandModel::loglogistic(1.8, 2.2)};
  for (const auto& m : continuous) {
    for (double d : {0.2, 0.8, 1.5, 3.0}) {
      CHECK(demand_quantile(m, demand_cdf(m, d)) == doctest::Approx(d).epsilon(1e-9));
      // density is the CDF derivative
      const double h = 1e-6;
      const double fd = (demand_cdf(m, d + h) - demand_cdf(m, d - h)) / (2.0 * h);
      CHECK(demand_density(m, d) == doctest::Approx(fd).epsilon(1e-5));
    }
    CHECK(demand_cdf(m, -0.5) == 0.0);
  }
  CHECK_THROWS_AS(demand_density(pm, 1.0), std::invalid_argument);
}

TEST_CASE("optimal_order is the left gamma-quantile") {
  const CostParams costs(1.0, 9.0, 10.0);  // gamma = 0.9
  const DemandModel w = DemandModel::weibull(0.5, 1.5);
  CHECK(optimal_order(w, costs) == doctest::Approx(2.7683).epsilon(1e-4));
  CHECK(optimal_order(DemandModel::point_mass(3.0), costs) == 3.0);
  const DemandModel d2 = DemandModel::discrete({1.0, 4.0}, {0.5, 0.5});
  CHECK(optimal_order(d2, CostParams(1.0, 1.0, 10.0)) == 1.0);
}

TEST_CASE("optimal_order minimizes the quadrature Bayes risk") {
  Rng rng = make_rng(13, "bayes-opt");
  const CostParams costs(1.0, 3.0, 12.0);
  const int cells = 1000;
  auto draw = [&](DemandFamily f) -> DemandModel {
    switch (f) {
      case DemandFamily::Weibull: return DemandModel::weibull(uniform_in(rng, 0.3, 0.9), uniform_in(rng, 1.0, 2.2));
      case DemandFamily::Exponential: return DemandModel::exponential(uniform_in(rng, 0.4, 1.2));
      case DemandFamily::LogNormal: return DemandModel::lognormal(uniform_in(rng, -0.2, 0.6), uniform_in(rng, 0.3, 0.8));
      case DemandFamily::Gompertz: return DemandModel::gompertz(uniform_in(rng, 0.2, 0.6), uniform_in(rng, 0.3, 0.8));
      default: return DemandModel::loglogistic(uniform_in(rng, 1.0, 2.5), uniform_in(rng, 2.0, 4.0));
    }
  };
  for (DemandFamily f : {DemandFamily::Weibull, DemandFamily::Exponential, DemandFamily::LogNormal,
                         DemandFamily::Gompertz, DemandFamily::LogLogistic}) {
    for (int rep = 0; rep < 5; ++rep) {
      const DemandModel m = draw(f);
      const auto risk = risk_grid(m, costs, cells);
      std::size_t argmin = 0;
      for (std::size_t i = 1; i < risk.size(); ++i)
        if (risk[i] < risk[argmin]) argmin = i;
      const double xstar = optimal_order(m, costs);
      const double cell = costs.bound / cells;
      CHECK(std::abs(xstar - static_cast<double>(argmin) * cell) <= cell + 1e-12);
      CHECK(bayes_risk(m, xstar, costs) == doctest::Approx(risk[argmin]).epsilon(1e-4));
    }
  }
}

TEST_CASE("realized regret step") {
  const CostParams costs(1.0, 2.0, 10.0);
  CHECK(realized_regret_step(3.0, 3.0, 7.0, costs) == 0.0);
  CHECK(realized_regret_step(5.0, 3.0, 3.0, costs) == 2.0);
  CHECK(realized_regret_step(2.0, 3.0, 3.0, costs) == 2.0);
}

TEST_CASE("task priors") {
  TaskPrior degenerate;
  degenerate.families.push_back(
      {DemandFamily::Weibull, {ParamSpec::fixed(0.5), ParamSpec::fixed(1.5)}});
  Rng rng = make_rng(17, "prior");
  const DemandModel t0 = sample_task(degenerate, rng);
  CHECK(t0.family == DemandFamily::Weibull);
  CHECK(t0.params[0] == 0.5);
  CHECK(t0.params[1] == 1.5);

  TaskPrior box;
  box.families.push_back(
      {DemandFamily::Weibull, {ParamSpec::uniform(0.2, 0.4), ParamSpec::fixed(1.0)}});
  for (int i = 0; i < 200; ++i) {
    const DemandModel t = sample_task(box, rng);
    CHECK(t.params[0] >= 0.2);
    CHECK(t.params[0] <= 0.4);
  }

  TaskPrior gamma_prior;
  gamma_prior.families.push_back(
      {DemandFamily::Weibull, {ParamSpec::gamma(2.0, 1.0), ParamSpec::fixed(1.5)}});
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = sample_task(gamma_prior, rng).params[0];
    sum += r;
    sumsq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean - 2.0) <= 3.0 * se);

  // Default bound: 0.9999 quantile of the prior-median task.
  TaskPrior med;
  med.families.push_back({DemandFamily::Weibull, {ParamSpec::fixed(0.5), ParamSpec::fixed(1.5)}});
  const double expect = demand_quantile(DemandModel::weibull(0.5, 1.5), 0.9999);
  CHECK(med.default_bound() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("demand sampling is clamped and inverse-transform consistent") {
  const DemandModel w = DemandModel::weibull(0.5, 1.5);
  Rng rng = make_rng(23, "sample");
  const double B = 3.0;  // deliberately tight to exercise the clamp
  int clamped = 0;
  for (int i = 0; i < 20000; ++i) {
    const double d = demand_sample(w, rng, B);
    CHECK(d >= 0.0);
    CHECK(d <= B);
    if (d == B) ++clamped;
  }
  const double expected = 20000.0 * (1.0 - demand_cdf(w, B));
  CHECK(clamped == doctest::Approx(expected).epsilon(0.5));
}
