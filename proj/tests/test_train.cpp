#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>

#include "icgps/math.hpp"
#include "icgps/train.hpp"
#include "test_util.hpp"

using namespace icgps;

namespace {
TaskPrior single_weibull_prior(double rate = 0.5, double shape = 1.5) {
  TaskPrior prior;
  prior.families.push_back(
      {DemandFamily::Weibull, {ParamSpec::fixed(rate), ParamSpec::fixed(shape)}});
  return prior;
}
}  // namespace

TEST_CASE("corpus generation and behavior policies") {
  const double B = 8.0;
  const TaskPrior prior = single_weibull_prior();

  SUBCASE("ordering B never censors bounded demand") {
    const auto corpus = generate_corpus(prior, BehaviorPolicy::fixed_order(B), 5, 50, B, 1);
    for (const auto& ep : corpus)
      for (std::size_t t = 0; t < ep.steps.size(); ++t) {
        CHECK_FALSE(ep.steps[t].obs.censored);
        CHECK(ep.steps[t].obs.sales == ep.demands[t]);
      }
  }

  SUBCASE("ordering zero censors everything") {
    const auto corpus = generate_corpus(prior, BehaviorPolicy::fixed_order(0.0), 5, 50, B, 2);
    for (const auto& ep : corpus)
      for (const auto& s : ep.steps) {
        CHECK(s.obs.censored);
        CHECK(s.obs.sales == 0.0);
      }
  }

  SUBCASE("default mixture hits the max order about 10% of the time") {
    const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(0.1), 200, 500, B, 3);
    long at_b = 0, total = 0;
    for (const auto& ep : corpus)
      for (const auto& s : ep.steps) {
        ++total;
        if (s.order == B) ++at_b;
      }
    const double p = static_cast<double>(at_b) / static_cast<double>(total);
    const double se = std::sqrt(0.1 * 0.9 / static_cast<double>(total));
    CHECK(std::abs(p - 0.1) <= 3.0 * se);
  }

  SUBCASE("episode consistency invariant") {
    const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 20, 40, B, 4);
    for (const auto& ep : corpus)
      for (const auto& s : ep.steps)
        if (s.obs.censored) CHECK(s.obs.sales == s.order);
  }
}

TEST_CASE("prefix batching") {
  const double B = 8.0;
  const auto corpus =
      generate_corpus(single_weibull_prior(), BehaviorPolicy::uniform_mix(), 10, 12, B, 5);
  const PrefixDataset ds = build_prefix_dataset(corpus, B);
  REQUIRE(ds.size() == 120);

  SUBCASE("t=1 prefixes carry the neutral context") {
    const ContextVector neutral = encode_context(History{}, B);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (i % 12 == 0)  // first step of each episode
        CHECK((ds.contexts.col(static_cast<long>(i)) - neutral).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("uniform over (episode, t): chi-square") {
    PrefixBatcher batcher(ds.size(), 64, make_rng(6, "batch"));
    std::vector<long> counts(ds.size(), 0);
    long draws = 0;
    while (draws < 100000) {
      for (std::size_t idx : batcher.next_batch()) {
        ++counts[idx];
        ++draws;
      }
    }
    const double expect = static_cast<double>(draws) / static_cast<double>(ds.size());
    double chi2 = 0.0;
    for (long c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // p-value from the chi-square CDF with n-1 dof
    const double dof = static_cast<double>(ds.size() - 1);
    const double p_value = 1.0 - gamma_p(dof / 2.0, chi2 / 2.0);
    CHECK(p_value > 0.01);
  }

  SUBCASE("batch sizes exact except the final partial batch") {
    PrefixBatcher batcher(ds.size(), 50, make_rng(7, "batch2"));
    CHECK(batcher.next_batch().size() == 50);
    CHECK(batcher.next_batch().size() == 50);
    CHECK(batcher.next_batch().size() == 20);  // 120 = 50+50+20
    CHECK(batcher.next_batch().size() == 50);  // new epoch
  }
}

TEST_CASE("adamw") {
  // 1-parameter "network"
  HyperNetwork net;
  net.weights.push_back(Eigen::MatrixXd::Constant(1, 1, 3.0));
  net.biases.push_back(Eigen::VectorXd::Zero(1));
  net.norm_mean = Eigen::VectorXd::Zero(1);
  net.norm_std = Eigen::VectorXd::Ones(1);

  SUBCASE("zero gradient, zero decay: parameters unchanged") {
    AdamWState state = AdamWState::zeros_like(net);
    NetGrad g = NetGrad::zeros_like(net);
    adamw_step(net, g, state, 1e-2, 0.0);
    CHECK(net.weights[0](0, 0) == 3.0);
  }

  SUBCASE("constant gradient moves against its sign") {
    AdamWState state = AdamWState::zeros_like(net);
    NetGrad g = NetGrad::zeros_like(net);
    g.weights[0](0, 0) = 2.5;
    for (int i = 0; i < 50; ++i) adamw_step(net, g, state, 1e-2, 0.0);
    CHECK(net.weights[0](0, 0) < 3.0);
  }

  SUBCASE("quadratic bowl converges") {
    net.weights[0](0, 0) = 5.0;
    AdamWState state = AdamWState::zeros_like(net);
    NetGrad g = NetGrad::zeros_like(net);
    for (int i = 0; i < 2000; ++i) {
      g.weights[0](0, 0) = 2.0 * net.weights[0](0, 0);  // d/dw of w^2
      adamw_step(net, g, state, 1e-2, 0.0);
    }
    CHECK(std::abs(net.weights[0](0, 0)) < 1e-3);
  }

  SUBCASE("shape mismatch rejected") {
    AdamWState state = AdamWState::zeros_like(net);
    NetGrad g = NetGrad::zeros_like(net);
    g.weights[0].resize(2, 1);
    g.weights[0].setZero();
    CHECK_THROWS_AS(adamw_step(net, g, state, 1e-2, 0.0), std::invalid_argument);
  }
}

TEST_CASE("training a single-task corpus recovers its quantiles") {
  const TaskPrior prior = single_weibull_prior(0.5, 1.5);
  const double B = prior.default_bound();
  const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 200, 40, B, 8);

  FlowShape shape{8, 4.0, B};
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 1024;
  tc.hidden = {32, 32};
  tc.patience = 30;
  tc.seed = 9;
  auto [model, report] = train(corpus, shape, tc);

  // Validation NLL at the returned checkpoint is the minimum over epochs.
  double min_val = report.val_nll.front();
  for (double v : report.val_nll) min_val = std::min(min_val, v);
  CHECK(report.best_val_nll == min_val);
  CHECK(report.val_nll[static_cast<std::size_t>(report.best_epoch)] == min_val);

  // Long fully revealed prefix, then query the 0.9-quantile.
  Rng rng = make_rng(10, "query");
  const DemandModel task = DemandModel::weibull(0.5, 1.5);
  const CostParams domain(1.0, 1.0, B);
  History h;
  for (int t = 0; t < 39; ++t) h.append(B, censor(B, demand_sample(task, rng, B), domain));
  const ContextVector ctx = encode_context(h, B);
  const double q90 = flow_quantile(model, ctx, 0.9);
  const double truth = demand_quantile(task, 0.9);  // 2.7683
  CHECK(std::abs(q90 - truth) / truth < 0.10);
}

TEST_CASE("reproducibility: identical seeds give identical reports") {
  const TaskPrior prior = single_weibull_prior();
  const double B = 8.0;
  const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 20, 15, B, 11);
  FlowShape shape{8, 4.0, B};
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 64;
  tc.hidden = {16, 16};
  tc.seed = 12;
  auto [m1, r1] = train(corpus, shape, tc);
  auto [m2, r2] = train(corpus, shape, tc);
  REQUIRE(r1.train_nll.size() == r2.train_nll.size());
  for (std::size_t i = 0; i < r1.train_nll.size(); ++i) {
    CHECK(r1.train_nll[i] == r2.train_nll[i]);  // bitwise
    CHECK(r1.val_nll[i] == r2.val_nll[i]);
  }
}

TEST_CASE("more data does not hurt validation NLL") {
  const TaskPrior prior = single_weibull_prior();
  const double B = prior.default_bound();
  std::vector<double> small_nll, big_nll;
  for (int seed = 0; seed < 5; ++seed) {
    const auto corpus =
        generate_corpus(prior, BehaviorPolicy::uniform_mix(), 60, 25, B, 100 + seed);
    const std::vector<Episode> small(corpus.begin(), corpus.begin() + 30);
    FlowShape shape{8, 4.0, B};
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 256;
    tc.hidden = {16, 16};
    tc.patience = 15;
    tc.seed = 200 + seed;
    auto [m_small, r_small] = train(small, shape, tc);
    auto [m_big, r_big] = train(corpus, shape, tc);
    const auto val = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 30, 25, B, 300 + seed);
    small_nll.push_back(validation_nll(m_small, val));
    big_nll.push_back(validation_nll(m_big, val));
  }
  double mean_gain = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < small_nll.size(); ++i) mean_gain += small_nll[i] - big_nll[i];
  mean_gain /= 5.0;
  for (std::size_t i = 0; i < small_nll.size(); ++i) {
    const double d = small_nll[i] - big_nll[i] - mean_gain;
    ss += d * d;
  }
  const double se = std::sqrt(ss / (5.0 * 4.0));
  CHECK(mean_gain > -se);  // doubling data does not increase NLL beyond noise
}

TEST_CASE("degenerate point-mass prior concentrates the predictive") {
  TaskPrior prior;
  prior.families.push_back({DemandFamily::PointMass, {ParamSpec::fixed(2.0)}});
  const double B = 4.0;
  const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 100, 20, B, 13);
  FlowShape shape{8, 4.0, B};
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 512;
  tc.hidden = {16, 16};
  tc.patience = 40;
  tc.seed = 14;
  auto [model, report] = train(corpus, shape, tc);
  Rng rng = make_rng(15, "pm-query");
  History h;
  const CostParams domain(1.0, 1.0, B);
  for (int t = 0; t < 10; ++t) h.append(B, censor(B, 2.0, domain));
  const double med = flow_quantile(model, encode_context(h, B), 0.5);
  CHECK(std::abs(med - 2.0) < 0.1);
}

TEST_CASE("validation NLL semantics") {
  const double B = 10.0;
  const CompletionModel uni = test_util::uniform_mimic_model(B);

  // Fully revealed episodes: every term is a density term ~ log B.
  TaskPrior prior = single_weibull_prior(0.5, 1.5);
  auto episodes = generate_corpus(prior, BehaviorPolicy::fixed_order(B), 10, 30, B, 16);
  const double nll = validation_nll(uni, episodes);
  CHECK(nll / 30.0 == doctest::Approx(std::log(B)).epsilon(0.02));

  // invariant under episode order permutation
  std::vector<Episode> reversed(episodes.rbegin(), episodes.rend());
  CHECK(validation_nll(uni, reversed) == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("trained on the right task beats a mismatched model") {
  const TaskPrior right = single_weibull_prior(0.5, 1.5);
  const TaskPrior wrong = single_weibull_prior(1.5, 1.5);
  const double B = right.default_bound();
  int wins = 0;
  for (int seed = 0; seed < 5; ++seed) {
    FlowShape shape{8, 4.0, B};
    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 512;
    tc.hidden = {16, 16};
    tc.patience = 12;
    tc.seed = 400 + seed;
    auto [m_right, r1] =
        train(generate_corpus(right, BehaviorPolicy::uniform_mix(), 40, 25, B, 500 + seed), shape, tc);
    auto [m_wrong, r2] =
        train(generate_corpus(wrong, BehaviorPolicy::uniform_mix(), 40, 25, B, 600 + seed), shape, tc);
    const auto val = generate_corpus(right, BehaviorPolicy::uniform_mix(), 25, 25, B, 700 + seed);
    if (validation_nll(m_right, val) < validation_nll(m_wrong, val)) ++wins;
  }
  CHECK(wins == 5);
}

TEST_CASE("delta_obs against parametric references") {
  const TaskPrior prior = single_weibull_prior(0.5, 1.5);
  const double B = prior.default_bound();
  const auto val = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 60, 40, B, 17);

  SUBCASE("identity at the true model") {
    // Using the generating family itself on both sides gives exactly zero.
    for (const auto& ep : val) {
      const double self = true_model_nll(ep);
      CHECK(self == self);  // finite
    }
    // A parametric "model" equal to the truth has zero excess log-loss.
    double delta = 0.0;
    for (const auto& ep : val) delta += true_model_nll(ep) - true_model_nll(ep);
    CHECK(delta == 0.0);
  }

  SUBCASE("trained model: population nonnegativity at 2 SE") {
    FlowShape shape{8, 4.0, B};
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 1024;
    tc.hidden = {32, 32};
    tc.patience = 20;
    tc.seed = 18;
    auto [model, report] =
        train(generate_corpus(prior, BehaviorPolicy::uniform_mix(), 120, 40, B, 19), shape, tc);
    const DeltaObs dobs = delta_obs_hat(model, val);
    CHECK(dobs.mean > -2.0 * dobs.se);
  }

  SUBCASE("missing true model is rejected") {
    auto stripped = val;
    for (auto& ep : stripped) ep.task.reset();
    const CompletionModel uni = test_util::uniform_mimic_model(B);
    CHECK_THROWS_AS(delta_obs_hat(uni, stripped), std::invalid_argument);
  }
}

TEST_CASE("corpus CSV round trip and validation") {
  const TaskPrior prior = single_weibull_prior();
  const double B = 8.0;
  const auto corpus = generate_corpus(prior, BehaviorPolicy::uniform_mix(), 4, 12, B, 20);
  const std::string path = "corpus_test.csv";
  write_corpus_csv(path, corpus);
  const auto loaded = read_corpus_csv(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t e = 0; e < corpus.size(); ++e) {
    REQUIRE(loaded[e].steps.size() == corpus[e].steps.size());
    for (std::size_t t = 0; t < corpus[e].steps.size(); ++t) {
      CHECK(loaded[e].steps[t].order == corpus[e].steps[t].order);
      CHECK(loaded[e].steps[t].obs.sales == corpus[e].steps[t].obs.sales);
      CHECK(loaded[e].steps[t].obs.censored == corpus[e].steps[t].obs.censored);
      CHECK(loaded[e].demands[t] == corpus[e].demands[t]);
    }
    REQUIRE(loaded[e].task.has_value());
    CHECK(loaded[e].task->params[0] == corpus[e].task->params[0]);
  }
  std::remove(path.c_str());
}
