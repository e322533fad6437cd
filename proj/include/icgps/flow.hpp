#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "icgps/env.hpp"
#include "icgps/rng.hpp"

namespace icgps {

// Slope/width floor applied after softplus, and the survival floor used by
// the censored likelihood so heavily censored batches cannot produce -log 0.
inline constexpr double kEpsWidth = 1e-4;
inline constexpr double kEpsSurvival = 1e-9;

// One-dimensional monotone flow: latent Z ~ N(0,1) is pushed through a
// piecewise-linear strictly increasing map T with K bins on [-L, L] and
// linear tails. Knot abscissae are fixed; heights and tail slopes are
// produced per-context by a hypernetwork.
struct FlowShape {
  int bins = 8;               // K >= 2
  double latent_bound = 4.0;  // L
  double demand_bound = 1.0;  // B

  double dz() const { return 2.0 * latent_bound / bins; }
  double knot(int i) const { return -latent_bound + i * dz(); }
  int raw_dim() const { return bins + 3; }  // K+1 heights + 2 tail slopes
};

struct FlowParams {
  Eigen::VectorXd heights;  // K+1, strictly increasing
  double slope_left = 1.0;
  double slope_right = 1.0;
};

// MLP with tanh hidden layers and per-coordinate input normalization.
// Output dim is K+1 raw heights plus 2 raw tail slopes; softplus on the
// increments guarantees a valid FlowParams for any weights.
struct HyperNetwork {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd norm_mean;
  Eigen::VectorXd norm_std;

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  static HyperNetwork init(int input_dim, const std::vector<int>& hidden, const FlowShape& shape,
                           Rng& rng);
};

struct CompletionModel {
  FlowShape shape;
  HyperNetwork net;
};

// Gradient holder mirroring a HyperNetwork's tensors.
struct NetGrad {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static NetGrad zeros_like(const HyperNetwork& net);
  void set_zero();
  void add_scaled(const NetGrad& other, double c);
  double squared_norm() const;
  void scale(double c);
};

// Reusable buffers so the sampling/training hot paths do not allocate.
struct FlowWorkspace {
  std::vector<Eigen::VectorXd> activations;
  Eigen::VectorXd raw;
  FlowParams params;
  Eigen::VectorXd grad_raw;
  std::vector<Eigen::VectorXd> grad_act;
};

void hyper_forward(const CompletionModel& model, const Eigen::VectorXd& ctx, FlowWorkspace& ws);
FlowParams hyper_forward(const CompletionModel& model, const Eigen::VectorXd& ctx);

// Transform and inverse for a fixed parameter set.
double flow_transform(const FlowShape& shape, const FlowParams& p, double z);
double flow_transform_inv(const FlowShape& shape, const FlowParams& p, double d);

double flow_cdf(const CompletionModel& model, const Eigen::VectorXd& ctx, double d);
double flow_survival(const CompletionModel& model, const Eigen::VectorXd& ctx, double d);
// u must lie in (0,1); result is clamped to [0, B].
double flow_quantile(const CompletionModel& model, const Eigen::VectorXd& ctx, double u);
double flow_log_density(const CompletionModel& model, const Eigen::VectorXd& ctx, double d);

// Exact draw from the tail law given D > threshold (inverse transform on the
// survival scale). Returns nullopt when the tail mass is below the survival
// floor; callers apply their fallback.
std::optional<double> tail_sample(const CompletionModel& model, const Eigen::VectorXd& ctx,
                                  double threshold, Rng& rng);
std::optional<double> tail_sample(const CompletionModel& model, const Eigen::VectorXd& ctx,
                                  double threshold, Rng& rng, FlowWorkspace& ws);

double flow_quantile(const CompletionModel& model, const Eigen::VectorXd& ctx, double u,
                     FlowWorkspace& ws);

// Censoring-aware negative log-likelihood of one observation: a density term
// when uncensored, a survival term (floored at kEpsSurvival) when censored.
double censored_nll(const CompletionModel& model, const Eigen::VectorXd& ctx, double order,
                    const CensoredObs& obs);

// Value plus exact reverse-mode gradient over all hypernetwork weights,
// accumulated into `grad` (scaled by `weight`).
double censored_nll_grad(const CompletionModel& model, const Eigen::VectorXd& ctx, double order,
                         const CensoredObs& obs, NetGrad& grad, FlowWorkspace& ws,
                         double weight = 1.0);

// Versioned checkpoint (structured text); see README for the field order.
void save_checkpoint(const std::string& path, const CompletionModel& model);
CompletionModel load_checkpoint(const std::string& path);

namespace testing {
// Flips the sign of the analytic gradient; exists so the diagnostic suite's
// mutation test can verify the gradient check actually fails.
void force_gradient_sign_flip(bool on);
}  // namespace testing

}  // namespace icgps
