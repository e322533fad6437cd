#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "icgps/diagnostics.hpp"
#include "icgps/policy.hpp"
#include "test_util.hpp"

using namespace icgps;

TEST_CASE("oracle_quantile") {
  CHECK(oracle_quantile(std::vector<double>{1, 2, 3, 4}, 0.5) == 2.0);
  CHECK(oracle_quantile(std::vector<double>{1, 2, 3, 4}, 0.75) == 3.0);
  CHECK(oracle_quantile(std::vector<double>{4, 2, 1, 3}, 0.5) == 2.0);  // order-free
  CHECK(oracle_quantile(std::vector<double>{7, 7, 7}, 0.1) == 7.0);
  CHECK(oracle_quantile(std::vector<double>{7, 7, 7}, 0.95) == 7.0);
  // nondecreasing in gamma
  const std::vector<double> v{0.4, 1.2, 0.8, 2.2, 1.7};
  double prev = 0.0;
  for (double g = 0.05; g < 1.0; g += 0.05) {
    const double q = oracle_quantile(v, g);
    CHECK(q >= prev);
    prev = q;
  }
  CHECK_THROWS_AS(oracle_quantile(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("complete_trajectory constraints") {
  const double B = 8.0;
  const CompletionModel model = make_random_model(1, B);
  const CostParams domain(1.0, 1.0, B);
  const DemandModel task = DemandModel::weibull(0.5, 1.5);

  SUBCASE("fully revealed prompt is copied verbatim") {
    Rng rng = make_rng(2, "hist");
    History h;
    for (int t = 0; t < 10; ++t) h.append(B, censor(B, demand_sample(task, rng, B), domain));
    Rng crng = make_rng(3, "completion");
    const Completion c = complete_trajectory(model, h, 11, 20, crng);
    REQUIRE(c.demands.size() == 20);
    for (int s = 0; s < 10; ++s) CHECK(c.demands(s) == h.steps[static_cast<std::size_t>(s)].obs.sales);
  }

  SUBCASE("censored slots always exceed their order") {
    Rng rng = make_rng(4, "hist2");
    History h;
    for (int t = 0; t < 12; ++t) {
      const double x = uniform_in(rng, 0.2, B - 0.2);
      h.append(x, censor(x, demand_sample(task, rng, B), domain));
    }
    Rng crng = make_rng(5, "completion2");
    for (int rep = 0; rep < 200; ++rep) {
      const Completion c = complete_trajectory(model, h, 13, 16, crng);
      for (std::size_t s = 0; s < h.steps.size(); ++s) {
        if (h.steps[s].obs.censored)
          CHECK(c.demands(static_cast<long>(s)) > h.steps[s].order);
        else
          CHECK(c.demands(static_cast<long>(s)) == h.steps[s].obs.sales);
      }
      for (long s = 0; s < c.demands.size(); ++s) {
        CHECK(c.demands(s) >= 0.0);
        CHECK(c.demands(s) <= B);
      }
    }
  }

  SUBCASE("length validation") {
    History h;
    Rng rng = make_rng(6, "len");
    CHECK_THROWS_AS(complete_trajectory(model, h, 2, 5, rng), std::invalid_argument);
  }
}

TEST_CASE("icgps_act") {
  const double B = 8.0;
  const CostParams costs(1.0, 9.0, B);  // gamma 0.9

  SUBCASE("warm-up orders B") {
    const CompletionModel model = make_random_model(7, B);
    ICGPSConfig cfg;
    cfg.warmup = 3;
    cfg.horizon = 10;
    IcgpsPolicy policy(&model, cfg, costs);
    Rng rng = make_rng(8, "act");
    History h;
    CHECK(policy.act(h, rng) == B);
  }

  SUBCASE("near point-mass flow acts at its atom") {
    const CompletionModel pm = test_util::point_mass_mimic_model(B, 3.0);
    ICGPSConfig cfg;
    cfg.warmup = 0;
    cfg.horizon = 12;
    cfg.rollouts = 8;
    IcgpsPolicy policy(&pm, cfg, costs);
    Rng rng = make_rng(9, "act2");
    History h;
    CHECK(policy.act(h, rng) == doctest::Approx(3.0).epsilon(0.02));
  }

  SUBCASE("M=1 equals the oracle of a single completion") {
    const CompletionModel model = make_random_model(10, B);
    ICGPSConfig cfg;
    cfg.warmup = 0;
    cfg.horizon = 9;
    cfg.rollouts = 1;
    IcgpsPolicy policy(&model, cfg, costs);
    History h;
    Rng rng1 = make_rng(11, "push");
    const double action = policy.act(h, rng1);
    Rng rng2 = make_rng(11, "push");
    const Completion c = complete_trajectory(model, h, 1, 9, rng2);
    CHECK(action == oracle_quantile(c.demands, costs.gamma()));
  }
}

TEST_CASE("discrete posterior and the exact GPS oracle") {
  const std::vector<DemandModel> tasks = {DemandModel::discrete({1.0, 2.0}, {1.0, 0.0}),
                                          DemandModel::discrete({3.0, 4.0}, {0.5, 0.5})};
  const std::vector<double> prior = {0.5, 0.5};

  SUBCASE("disjoint supports collapse the posterior") {
    History h;
    h.append(5.0, {3.0, false});  // only task 2 can produce demand 3
    const auto post = discrete_posterior(tasks, prior, h);
    CHECK(post[0] == 0.0);
    CHECK(post[1] == 1.0);
    const ActionLaw law = exact_gps_discrete(tasks, prior, h, 0.5, 3);
    // every completion draws from {3,4}; the 0.5-quantile of 3 draws is the
    // lower median, still in {3,4}
    double total = 0.0;
    for (double p : law.probs) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (double a : law.actions) CHECK((a == 3.0 || a == 4.0));
  }

  SUBCASE("symmetric tasks give a symmetric action law") {
    const std::vector<DemandModel> sym = {DemandModel::discrete({1.0, 2.0}, {0.7, 0.3}),
                                          DemandModel::discrete({1.0, 2.0}, {0.3, 0.7})};
    const ActionLaw law = exact_gps_discrete(sym, prior, History{}, 0.5, 4);
    // Swapping the tasks relabels 1 <-> 2; uniform prior makes the law
    // invariant, so P(action=1)+P(action=2)=1 with no other atoms.
    CHECK(law.actions.size() == 2);
    CHECK(law.probs[0] + law.probs[1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero-likelihood history is rejected") {
    History h;
    h.append(5.0, {2.5, false});
    CHECK_THROWS_AS(discrete_posterior(tasks, prior, h), std::invalid_argument);
  }

  SUBCASE("enumeration guard") {
    std::vector<double> atoms, probs;
    for (int i = 0; i < 12; ++i) {
      atoms.push_back(static_cast<double>(i));
      probs.push_back(1.0);
    }
    const std::vector<DemandModel> big = {DemandModel::discrete(atoms, probs)};
    CHECK_THROWS_AS(exact_gps_discrete(big, {1.0}, History{}, 0.5, 8), std::invalid_argument);
  }
}

TEST_CASE("true-kernel completion marginal matches the posterior predictive") {
  const std::vector<DemandModel> tasks = {DemandModel::discrete({1.0, 2.0, 3.0}, {0.6, 0.3, 0.1}),
                                          DemandModel::discrete({1.0, 2.0, 3.0}, {0.1, 0.3, 0.6})};
  const std::vector<double> prior = {0.5, 0.5};
  History h;
  h.append(1.5, {1.5, true});  // stockout at 1.5: demand was 2 or 3
  const int T = 4;
  const int t = 2;  // next slot index after the prompt

  // Exact posterior predictive at slot t.
  const auto post = discrete_posterior(tasks, prior, h);
  std::map<double, double> predictive;
  for (std::size_t k = 0; k < tasks.size(); ++k)
    for (std::size_t i = 0; i < tasks[k].atoms.size(); ++i)
      predictive[tasks[k].atoms[i]] += post[k] * tasks[k].probs[i];

  Rng rng = make_rng(12, "marginal");
  std::map<double, double> mc;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto c = sample_true_kernel_completion(tasks, prior, h, T, rng);
    mc[c[static_cast<std::size_t>(t - 1)]] += 1.0 / n;
  }
  double tv = 0.0;
  for (const auto& [v, p] : predictive) tv += std::abs(p - mc[v]);
  CHECK(0.5 * tv < 0.02);
}
