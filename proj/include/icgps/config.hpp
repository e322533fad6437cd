#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icgps/baselines.hpp"
#include "icgps/env.hpp"
#include "icgps/policy.hpp"
#include "icgps/train.hpp"

namespace icgps {

// One structured-text config file carries every science input; flags only
// override out_dir/seed/threads. Comments (// and /* */) are allowed.
// Unknown keys are rejected with their dotted path.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int threads = 1;

  double cost_h = 1.0;
  double cost_b = 1.0;
  double bound = 0.0;  // 0 = derive from the prior (0.9999 quantile rule)

  TaskPrior prior;

  int flow_bins = 8;
  double flow_latent_bound = 4.0;
  std::vector<int> hidden{64, 64};

  // corpus + optimizer settings for `train`
  int corpus_episodes = 200;
  int corpus_horizon = 200;
  BehaviorPolicy behavior = BehaviorPolicy::uniform_mix();
  TrainConfig train;

  ICGPSConfig icgps;

  struct Experiment {
    std::string kind;  // q1 | q2-data | q2-capacity | q3-shift | q3-prior | ingest-eval
    int horizon = 600;
    int trials = 20;
    std::vector<double> gammas{0.5, 0.9, 0.98};
    std::string checkpoint;
    std::optional<DemandModel> task;
    GammaPosterior ts_prior{2.0, 4.0, 1.5};
    std::optional<GammaPosterior> ts_correct;
    std::optional<GammaPosterior> ts_train_prior;  // default: fit from the training prior
    std::vector<int> corpus_sizes{25, 50, 100, 200, 400};
    std::vector<int> hidden_widths{16, 32, 64, 128};
    int val_episodes = 50;
    int capacity_corpus_size = 200;
    std::string store;  // ingest-eval input CSV
    std::vector<std::string> policies{"icgps", "km", "saa"};
  };
  std::optional<Experiment> experiment;

  double resolved_bound() const { return bound > 0.0 ? bound : prior.default_bound(); }
  FlowShape flow_shape() const { return FlowShape{flow_bins, flow_latent_bound, resolved_bound()}; }
};

// Throws ConfigError (with the offending key path) on schema violations.
RunConfig load_config(const std::string& path);

// Echo of the resolved configuration, for reproducibility.
void write_resolved_config(const std::string& path, const RunConfig& cfg);

}  // namespace icgps
