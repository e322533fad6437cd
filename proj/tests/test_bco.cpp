#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icgps/bco.hpp"
#include "icgps/math.hpp"

using namespace icgps;

TEST_CASE("z_from_obs") {
  CHECK_FALSE(z_from_obs({4.0, true}, 1.0, 4.0));   // stockout forces Z = 0
  CHECK_FALSE(z_from_obs({4.0, true}, 4.0, 4.0));
  CHECK(z_from_obs({1.5, false}, 2.0, 3.0));
  CHECK_FALSE(z_from_obs({1.5, false}, 1.0, 3.0));
  CHECK_THROWS_AS(z_from_obs({1.5, false}, 3.5, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(z_from_obs({1.5, false}, -0.1, 3.0), std::invalid_argument);
}

TEST_CASE("derived feedback values and bounds") {
  const CostParams costs(1.0, 1.0, 10.0);
  Rng rng = make_rng(1, "df");

  const DerivedFeedback f0 = derived_feedback(0.0, {0.0, false}, rng, costs);
  CHECK(f0.y == 0.0);
  CHECK(f0.u == 0.0);

  for (int i = 0; i < 100; ++i) {
    const DerivedFeedback f = derived_feedback(2.0, {1.0, false}, rng, costs);
    CHECK((f.y == 2.0 || f.y == -2.0));
  }

  const CostParams c2(0.7, 2.3, 5.0);
  const DemandModel task = DemandModel::weibull(0.5, 1.5);
  for (int i = 0; i < 100000; ++i) {
    const double x = uniform_in(rng, 0.0, c2.bound);
    const double d = demand_sample(task, rng, c2.bound);
    const DerivedFeedback f = derived_feedback(x, censor(x, d, c2), rng, c2);
    CHECK(f.y >= -c2.b * c2.bound - 1e-12);
    CHECK(f.y <= c2.h * c2.bound + 1e-12);
  }
}

TEST_CASE("g objective") {
  const CostParams costs(1.0, 1.0, 10.0);
  CHECK(g_objective(DemandModel::point_mass(1.0), 2.0, costs) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g_objective(DemandModel::point_mass(1.0), 0.0, costs) == 0.0);
  CHECK(g_objective(DemandModel::weibull(0.5, 1.5), 0.0, costs) == 0.0);

  // f(x) = g(x) + b E[D] against the quadrature Bayes risk
  const CostParams c2(1.0, 3.0, 12.0);
  for (const auto& model : {DemandModel::weibull(0.5, 1.5), DemandModel::exponential(0.6),
                            DemandModel::lognormal(0.2, 0.5)}) {
    // E[D] of the law clamped to [0, B]
    const double mean_clamped =
        integrate([&](double t) { return 1.0 - demand_cdf(model, t); }, 0.0, c2.bound, 1e-11);
    for (int i = 1; i <= 20; ++i) {
      const double x = c2.bound * i / 21.0;
      const double f = bayes_risk(model, x, c2);
      const double g = g_objective(model, x, c2);
      CHECK(f == doctest::Approx(g + c2.b * mean_clamped).epsilon(1e-6));
    }
  }
}

TEST_CASE("unbiasedness of the derived feedback") {
  Rng rng = make_rng(2, "unbiased");

  SUBCASE("point mass at 1, x=2: E[Y] = 0") {
    const CostParams costs(1.0, 1.0, 10.0);
    const UnbiasednessResult r =
        unbiasedness_check(DemandModel::point_mass(1.0), 2.0, costs, 100000, rng);
    CHECK(r.g_value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.pass);
  }

  SUBCASE("x = 0 is exact") {
    const CostParams costs(1.0, 2.0, 10.0);
    const UnbiasednessResult r =
        unbiasedness_check(DemandModel::weibull(0.5, 1.5), 0.0, costs, 2000, rng);
    CHECK(r.mc_mean == 0.0);
    CHECK(r.g_value == 0.0);
    CHECK(r.pass);
  }

  SUBCASE("Weibull at x=2") {
    const CostParams costs(1.0, 1.0, 10.0);
    const UnbiasednessResult r =
        unbiasedness_check(DemandModel::weibull(0.5, 1.5), 2.0, costs, 100000, rng);
    CHECK(r.pass);
  }

  SUBCASE("30-cell grid") {
    const std::vector<DemandModel> models = {
        DemandModel::weibull(0.5, 1.5),   DemandModel::exponential(0.6),
        DemandModel::lognormal(0.2, 0.5), DemandModel::gompertz(0.3, 0.4),
        DemandModel::loglogistic(1.5, 2.5)};
    for (const auto& m : models)
      for (double b : {1.0, 9.0})
        for (double x : {0.8, 2.0, 4.5}) {
          const CostParams costs(1.0, b, 8.0);
          CHECK(unbiasedness_check(m, x, costs, 100000, rng).pass);
        }
  }
}

TEST_CASE("g is convex with slopes in [-b, h]") {
  const CostParams costs(1.0, 3.0, 8.0);
  for (const auto& model : {DemandModel::weibull(0.5, 1.5), DemandModel::gompertz(0.3, 0.4)}) {
    const int n = 200;
    std::vector<double> g(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i)
      g[static_cast<std::size_t>(i)] = g_objective(model, costs.bound * i / n, costs);
    const double dx = costs.bound / n;
    for (int i = 1; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      CHECK(g[k + 1] - 2.0 * g[k] + g[k - 1] >= -1e-8);
    }
    for (int i = 0; i < n; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      const double slope = (g[k + 1] - g[k]) / dx;
      CHECK(slope <= costs.h + 1e-6);
      CHECK(slope >= -costs.b - 1e-6);
    }
  }
}
