#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "icgps/baselines.hpp"
#include "icgps/math.hpp"

using namespace icgps;

TEST_CASE("gamma conjugate update") {
  GammaPosterior post{2.0, 1.0, 1.5};
  post = gamma_update(post, 3.0, {1.0, false});  // uncensored d=1
  CHECK(post.a == 3.0);
  CHECK(post.b == 2.0);
  post = gamma_update(post, 4.0, {4.0, true});  // censored at 4: b += 4^1.5 = 8
  CHECK(post.a == 3.0);
  CHECK(post.b == doctest::Approx(10.0).epsilon(1e-12));

  // censored at zero is a no-op
  GammaPosterior p0{2.0, 1.0, 1.5};
  const GammaPosterior p1 = gamma_update(p0, 0.0, {0.0, true});
  CHECK(p1.a == p0.a);
  CHECK(p1.b == p0.b);

  // n uncensored zeros bump only the shape
  GammaPosterior pz{2.0, 1.0, 1.5};
  for (int i = 0; i < 5; ++i) pz = gamma_update(pz, 3.0, {0.0, false});
  CHECK(pz.a == 7.0);
  CHECK(pz.b == 1.0);

  // order invariance
  Rng rng = make_rng(1, "commute");
  std::vector<std::pair<double, CensoredObs>> obs;
  for (int i = 0; i < 20; ++i) {
    const double x = uniform_in(rng, 0.1, 5.0);
    obs.emplace_back(x, uniform01(rng) < 0.5 ? CensoredObs{x, true}
                                             : CensoredObs{uniform_in(rng, 0.0, x), false});
  }
  GammaPosterior fwd{2.0, 1.0, 1.5}, rev{2.0, 1.0, 1.5};
  for (const auto& [x, o] : obs) fwd = gamma_update(fwd, x, o);
  for (auto it = obs.rbegin(); it != obs.rend(); ++it) rev = gamma_update(rev, it->first, it->second);
  CHECK(fwd.a == rev.a);
  CHECK(fwd.b == doctest::Approx(rev.b).epsilon(1e-12));
}

TEST_CASE("ts_weibull_act") {
  // Near-degenerate posterior at rate 0.5.
  GammaPosterior tight{5e6, 1e7, 1.5};
  Rng rng = make_rng(2, "ts");
  double mean = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) mean += ts_weibull_act(tight, 0.9, 100.0, rng);
  mean /= n;
  CHECK(mean == doctest::Approx(2.7683).epsilon(0.01));

  // clamp at the bound as gamma -> 1
  GammaPosterior post{2.0, 4.0, 1.5};
  CHECK(ts_weibull_act(post, 0.999999999, 5.0, rng) == 5.0);
}

TEST_CASE("myopic MLE") {
  const double k = 1.5, gamma = 0.9, B = 50.0;
  History h;
  CHECK(myopic_mle_act(h, k, gamma, B) == B);  // cold start

  const double d = std::pow(2.0, 1.0 / k);  // d^k = 2 so the MLE rate is 1/2
  h.append(10.0, {d, false});
  const double expect = std::pow(-std::log1p(-gamma) / 0.5, 1.0 / k);
  CHECK(myopic_mle_act(h, k, gamma, B) == doctest::Approx(expect).epsilon(1e-12));

  // censored rows change nothing
  History h2 = h;
  h2.append(3.0, {3.0, true});
  h2.append(1.0, {1.0, true});
  CHECK(myopic_mle_act(h2, k, gamma, B) == myopic_mle_act(h, k, gamma, B));
}

TEST_CASE("UCB") {
  const double k = 1.5, gamma = 0.9, B = 50.0;
  History h;
  CHECK(ucb_act(h, k, gamma, B) == B);  // cold start

  Rng rng = make_rng(3, "ucb");
  const DemandModel task = DemandModel::weibull(0.5, k);
  const CostParams domain(1.0, 1.0, B);
  for (int i = 0; i < 50; ++i) {
    const double x = uniform_in(rng, 0.5, 6.0);
    h.append(x, censor(x, demand_sample(task, rng, B), domain));
  }
  // optimism: UCB never orders below the plug-in MLE
  CHECK(ucb_act(h, k, gamma, B) >= myopic_mle_act(h, k, gamma, B));

  // concentration: with 1e4 uncensored samples the optimistic rate is within
  // 5% of the truth
  History big;
  for (int i = 0; i < 10000; ++i) big.append(B, censor(B, demand_sample(task, rng, B), domain));
  const double truth = demand_quantile(task, gamma);
  CHECK(std::abs(ucb_act(big, k, gamma, B) - truth) / truth < 0.05);
}

TEST_CASE("SAA and KM plug-in") {
  const double B = 20.0;
  History h;
  CHECK(saa_act(h, 0.5, B) == B);
  CHECK(km_act(h, 0.5, B) == B);

  for (double d : {1.0, 2.0, 3.0, 4.0}) h.append(10.0, {d, false});
  CHECK(saa_act(h, 0.5, B) == 2.0);
  CHECK(km_act(h, 0.5, B) == 2.0);

  // no censoring: SAA == KM at every level
  for (double g = 0.1; g < 1.0; g += 0.1) CHECK(saa_act(h, g, B) == km_act(h, g, B));

  History all_censored;
  for (int i = 0; i < 6; ++i) all_censored.append(4.0, {4.0, true});
  CHECK(km_act(all_censored, 0.5, B) == B);

  // censoring only shifts KM mass upward
  Rng rng = make_rng(4, "kmsaa");
  const DemandModel task = DemandModel::weibull(0.5, 1.5);
  const CostParams domain(1.0, 1.0, B);
  for (int rep = 0; rep < 20; ++rep) {
    History hist;
    const int n = 5 + static_cast<int>(uniform01(rng) * 30);
    for (int i = 0; i < n; ++i) {
      const double x = uniform_in(rng, 0.2, 6.0);
      hist.append(x, censor(x, demand_sample(task, rng, B), domain));
    }
    for (double g : {0.3, 0.5, 0.9}) CHECK(km_act(hist, g, B) >= saa_act(hist, g, B));
  }
}

TEST_CASE("long uncensored stream: TS, MLE, UCB all converge") {
  const double k = 1.5, gamma = 0.9, B = 50.0;
  const DemandModel task = DemandModel::weibull(0.5, k);
  const double truth = demand_quantile(task, gamma);
  const CostParams domain(1.0, 1.0, B);
  double ts_mean = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng = make_rng(100 + seed, "conv");
    History h;
    for (int i = 0; i < 10000; ++i) h.append(B, censor(B, demand_sample(task, rng, B), domain));
    GammaPosterior post{2.0, 4.0, k};
    for (const auto& s : h.steps) post = gamma_update(post, s.order, s.obs);
    ts_mean += ts_weibull_act(post, gamma, B, rng);
    CHECK(std::abs(myopic_mle_act(h, k, gamma, B) - truth) / truth < 0.05);
    CHECK(std::abs(ucb_act(h, k, gamma, B) - truth) / truth < 0.05);
  }
  ts_mean /= seeds;
  CHECK(std::abs(ts_mean - truth) / truth < 0.05);
}
