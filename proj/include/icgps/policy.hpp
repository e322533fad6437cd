#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "icgps/env.hpp"
#include "icgps/flow.hpp"
#include "icgps/survival.hpp"

namespace icgps {

// Online policy interface: maps the censored history to an order quantity.
// Policies with posterior state recompute it from the history, so instances
// are reusable across trials after reset().
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void reset() {}
  virtual double act(const History& history, Rng& rng) = 0;
};

struct ICGPSConfig {
  int rollouts = 32;  // M completions per decision
  int warmup = 3;     // T0 rounds ordering B
  int horizon = 1;    // T
  // When false, pseudo-future entries are left out of the context used for
  // sampling later future slots (ablation switch; default keeps them in).
  bool pseudo_future_in_km = true;
};

struct Completion {
  Eigen::VectorXd demands;  // length T, values in [0, B]
  int tail_fallbacks = 0;   // rounds where the tail mass was exhausted
};

// Censoring-consistent autoregressive completion. For s < t uncensored the
// revealed sales are copied; for s < t censored the demand is drawn from the
// model's tail above the order; for s >= t the one-step conditional is
// unconstrained. Sampled demands re-enter the conditioning pseudo-history as
// uncensored entries, pseudo-future steps with order = B.
Completion complete_trajectory(const CompletionModel& model, const History& history, int t, int T,
                               Rng& rng, bool pseudo_future_in_km = true);

// Left empirical gamma-quantile: the ceil(gamma*T)-th order statistic.
double oracle_quantile(const Eigen::VectorXd& demands, double gamma);
double oracle_quantile(std::vector<double> demands, double gamma);

class IcgpsPolicy final : public Policy {
 public:
  IcgpsPolicy(const CompletionModel* model, ICGPSConfig config, CostParams costs)
      : model_(model), config_(config), costs_(costs) {}

  std::string name() const override { return "icgps"; }
  void reset() override { tail_fallbacks_ = 0; }
  double act(const History& history, Rng& rng) override;

  long tail_fallbacks() const { return tail_fallbacks_; }

 private:
  const CompletionModel* model_;
  ICGPSConfig config_;
  CostParams costs_;
  long tail_fallbacks_ = 0;
  std::vector<double> actions_;  // rollout scratch
};

// Exact action law of the oracle under the true posterior, by enumeration
// over a finite task set with finite supports. Used as the probability-
// matching test oracle. Throws when the enumeration would exceed 1e6
// combinations.
struct ActionLaw {
  std::vector<double> actions;  // ascending
  std::vector<double> probs;

  double prob_of(double a) const;
};

ActionLaw exact_gps_discrete(const std::vector<DemandModel>& tasks,
                             const std::vector<double>& prior_weights, const History& history,
                             double gamma, int T);

// Posterior weights over the finite task set given a censored history.
std::vector<double> discrete_posterior(const std::vector<DemandModel>& tasks,
                                       const std::vector<double>& prior_weights,
                                       const History& history);

// One completion drawn from the true posterior kernel (sample a task from
// the posterior, then demands respecting the censoring constraints). The
// Monte Carlo side of the probability-matching check.
std::vector<double> sample_true_kernel_completion(const std::vector<DemandModel>& tasks,
                                                  const std::vector<double>& prior_weights,
                                                  const History& history, int T, Rng& rng);

double total_variation(const ActionLaw& a, const ActionLaw& b);

}  // namespace icgps
