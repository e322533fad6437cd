#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icgps/env.hpp"
#include "icgps/flow.hpp"
#include "icgps/survival.hpp"

namespace icgps {

// One offline episode: the censored interaction record, plus the latent
// demands and generating task when the source is synthetic (diagnostics
// only; training never reads them).
struct Episode {
  std::string id;
  std::vector<HistoryStep> steps;
  std::vector<double> demands;  // empty when latent demand is unknown
  std::optional<DemandModel> task;

  std::vector<std::uint8_t> demand_known;  // per-step flag for partial ingestion
};

// Data-collection policy used for synthetic corpora. The default mixes a
// uniform order on [0, B] with a point mass at B so max-order coverage holds
// in the training distribution.
struct BehaviorPolicy {
  enum class Kind { UniformMix, FixedOrder, TaskQuantile } kind = Kind::UniformMix;
  double max_order_prob = 0.1;  // UniformMix: probability of ordering exactly B
  double value = 0.0;           // FixedOrder: order level; TaskQuantile: quantile level

  static BehaviorPolicy uniform_mix(double eta = 0.1) { return {Kind::UniformMix, eta, 0.0}; }
  static BehaviorPolicy fixed_order(double x) { return {Kind::FixedOrder, 0.0, x}; }
  static BehaviorPolicy task_quantile(double q) { return {Kind::TaskQuantile, 0.0, q}; }

  double act(const DemandModel& task, double bound, Rng& rng) const;
};

std::vector<Episode> generate_corpus(const TaskPrior& prior, const BehaviorPolicy& behavior,
                                     int n_tasks, int horizon, double bound, std::uint64_t seed);

// All (episode, t) prefixes of a corpus with their contexts precomputed.
struct PrefixDataset {
  Eigen::MatrixXd contexts;  // kContextDim x n, one column per prefix
  std::vector<double> orders;
  std::vector<CensoredObs> obs;
  std::vector<int> episode_index;
  std::size_t size() const { return orders.size(); }
};

PrefixDataset build_prefix_dataset(const std::vector<Episode>& corpus, double bound);

// Uniform sampler over (episode, t) pairs: a fresh random permutation per
// epoch, batches of exactly `batch_size` except the final partial one.
class PrefixBatcher {
 public:
  PrefixBatcher(std::size_t n, int batch_size, Rng rng);
  const std::vector<std::size_t>& next_batch();

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> batch_;
  std::size_t cursor_ = 0;
  int batch_size_;
  Rng rng_;
  void reshuffle();
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 2048;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // global norm; 0 disables
  double val_fraction = 0.2;
  int patience = 10;
  std::uint64_t seed = 1;
  std::vector<int> hidden = {64, 64};
  int grad_shards = 16;  // fixed shard count keeps reductions deterministic
  int threads = 1;
};

struct TrainReport {
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  int best_epoch = 0;
  double best_val_nll = 0.0;
  std::optional<double> delta_obs;
};

// AdamW with decoupled weight decay, beta = (0.9, 0.999), eps = 1e-8.
struct AdamWState {
  NetGrad m, v;
  long step = 0;
  static AdamWState zeros_like(const HyperNetwork& net);
};

void adamw_step(HyperNetwork& net, const NetGrad& grad, AdamWState& state, double learning_rate,
                double weight_decay);

// Minimizes the mean censored NLL over prefix batches; returns the
// checkpoint with the best validation NLL. Deterministic given the seed.
std::pair<CompletionModel, TrainReport> train(const std::vector<Episode>& corpus,
                                              const FlowShape& shape, const TrainConfig& config);

// Mean over episodes of the per-episode summed censored NLL.
double validation_nll(const CompletionModel& model, const std::vector<Episode>& corpus_val);

// Censored NLL of the generating task itself, via the closed-form family
// CDF/density (the one-step observation likelihood).
double true_model_nll(const Episode& episode);

struct DeltaObs {
  double mean = 0.0;  // per-episode mean of (model NLL - true NLL)
  double se = 0.0;
  int episodes = 0;
};

// Excess censored predictive log-loss of the model over the generating
// tasks; validation episodes must carry their DemandModel.
DeltaObs delta_obs_hat(const CompletionModel& model, const std::vector<Episode>& corpus_val);

// Corpus CSV: header
//   episode_id,t,order,sales,censored,demand,true_family,true_p0,true_p1
// with '.' decimals; demand/true_* columns empty when unknown. censored is
// 0/1 where 1 means a stockout (sales were truncated at the order).
void write_corpus_csv(const std::string& path, const std::vector<Episode>& corpus);
std::vector<Episode> read_corpus_csv(const std::string& path);

}  // namespace icgps
