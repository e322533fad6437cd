#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "icgps/baselines.hpp"
#include "icgps/env.hpp"
#include "icgps/policy.hpp"
#include "icgps/train.hpp"

namespace icgps {

struct TrialResult {
  int trial = 0;
  std::string policy;
  std::vector<double> orders;
  std::vector<double> demands;
  std::vector<double> losses;
  std::vector<double> cum_regret;
};

struct RegretCurve {
  std::vector<double> mean;
  std::vector<double> se;
  int trials = 0;
};

// Sample mean and standard error sqrt(sum (R - mean)^2 / (N (N-1))) per time
// step; needs at least two trials.
RegretCurve aggregate(const std::vector<std::vector<double>>& cum_regret_trajectories);

// One shared-stream trial: a single demand stream is generated once and every
// policy replays it; per-policy RNGs are derived from the policy name so list
// order is irrelevant. The first `warmup_rounds` orders are forced to B for
// every policy (policies still observe the outcome).
std::vector<TrialResult> run_trial(const DemandModel& task, const std::vector<Policy*>& policies,
                                   int T, const CostParams& costs, std::uint64_t seed,
                                   int warmup_rounds);

using PolicyFactory = std::function<std::vector<std::unique_ptr<Policy>>(const CostParams&)>;

// results.csv rows: (experiment, gamma, policy, trial, t, order, cum_regret),
// ordered by (trial, t) with policies inner.
struct ResultRow {
  std::string experiment;
  double gamma;
  std::string policy;
  int trial;
  int t;
  double order;
  double cum_regret;
};

struct ExperimentResult {
  std::string experiment;
  struct Series {
    double gamma;
    std::string policy;
    RegretCurve curve;
  };
  std::vector<Series> series;
  std::vector<ResultRow> rows;

  const RegretCurve& curve(double gamma, const std::string& policy) const;
};

// Runs `trials` shared-stream trials per gamma with fresh policy instances
// from the factory; trials are distributed over threads deterministically.
ExperimentResult run_experiment(const std::string& name, const DemandModel& task,
                                const PolicyFactory& factory, const std::vector<double>& gammas,
                                int T, int trials, double h, double bound, std::uint64_t seed,
                                int warmup_rounds, int threads);

struct Q1Config {
  DemandModel task = DemandModel::weibull(0.5, 1.5);
  std::vector<double> gammas{0.5, 0.9, 0.98};
  int horizon = 600;
  int trials = 20;
  double h = 1.0;
  double bound = 8.0;
  GammaPosterior ts_prior{2.0, 4.0, 1.5};
  const CompletionModel* model = nullptr;
  ICGPSConfig icgps;
  std::uint64_t seed = 1;
  int threads = 1;
};

ExperimentResult run_q1(const Q1Config& cfg);

struct Q2Config {
  DemandModel task = DemandModel::weibull(0.5, 1.5);
  TaskPrior train_prior;
  BehaviorPolicy behavior = BehaviorPolicy::uniform_mix();
  std::vector<int> corpus_sizes{25, 50, 100, 200, 400};
  std::vector<int> hidden_widths{16, 32, 64, 128};
  int capacity_corpus_size = 200;
  int corpus_horizon = 200;
  int val_episodes = 50;
  std::vector<double> gammas{0.9, 0.98};
  int horizon = 200;
  int trials = 20;
  double h = 1.0;
  double bound = 8.0;
  FlowShape flow_shape;
  TrainConfig train_cfg;
  ICGPSConfig icgps;
  std::uint64_t seed = 1;
  int threads = 1;
  bool run_capacity_sweep = true;
};

struct Q2Point {
  std::string sweep;  // "data" or "capacity"
  double sweep_value;
  double gamma;
  double delta_obs;
  double final_regret;
  double val_nll;
};

struct Q2Result {
  std::vector<Q2Point> points;
  // (sweep, gamma) -> Spearman rank correlation of delta_obs vs final regret
  std::vector<std::tuple<std::string, double, double>> spearman;
};

Q2Result run_q2(const Q2Config& cfg);

struct Q3Config {
  std::string label = "q3";
  DemandModel test_task = DemandModel::weibull(0.5, 1.5);
  GammaPosterior ts_correct{2.0, 4.0, 1.5};
  GammaPosterior ts_train{2.0, 4.0, 1.0};
  std::vector<double> gammas{0.5, 0.9, 0.98};
  int horizon = 60;
  int trials = 20;
  double h = 1.0;
  double bound = 8.0;
  const CompletionModel* model = nullptr;
  ICGPSConfig icgps;
  std::uint64_t seed = 1;
  int threads = 1;
};

ExperimentResult run_q3(const Q3Config& cfg);

// Moment-matched conjugate prior induced by an offline task prior: per-task
// pseudo Weibull rates are fit by mean matching at a common shape (the shape
// chosen by matching the pooled coefficient of variation), then a Gamma law
// is moment-fit to the rates.
GammaPosterior fit_weibull_prior_to_tasks(const TaskPrior& prior, int n_tasks, std::uint64_t seed);

// Episode replay for real(-like) stores. Realized cost uses the recorded
// demand when available, else the censored-sales lower bound with the flag
// set on that row's group. Group = episode_id prefix before ':' (or "all").
struct CostTableRow {
  std::string policy;
  std::string group;
  double mean_cost;
  int episodes;
  bool lower_bound_flag;
};

std::vector<CostTableRow> evaluate_episodes(const std::vector<Episode>& episodes,
                                            const PolicyFactory& factory, const CostParams& costs,
                                            int warmup_rounds, std::uint64_t seed);

// Bundled synthetic "real-like" store: 20 heterogeneous Weibull episodes,
// heavy censoring (behavior orders the task 0.3-quantile), demands retained.
std::vector<Episode> make_demo_store(std::uint64_t seed, double bound, int horizon = 48);

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
void write_regret_svg(const std::string& path, const std::string& title,
                      const std::vector<ExperimentResult::Series>& series);

}  // namespace icgps
