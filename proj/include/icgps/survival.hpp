#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "icgps/env.hpp"

namespace icgps {

// Context layout: 19 KM quantiles on the grid {0.05, 0.10, ..., 0.95}
// followed by 6 summary statistics
//   [last order, last sales, proxy mean, proxy std, censoring rate, t-1].
// An optional external 19-vector of forecast quantiles can be prepended,
// giving a 44-dim context; the default is 25.
inline constexpr int kQuantileGridSize = 19;
inline constexpr int kStatsSize = 6;
inline constexpr int kContextDim = kQuantileGridSize + kStatsSize;

extern const double kQuantileGrid[kQuantileGridSize];

using ContextVector = Eigen::VectorXd;

// Product-limit estimator over a censored history: uncensored sales are
// events, censored entries leave the risk set at their order level. Ties at
// a level process events first.
struct KMEstimator {
  std::vector<double> event_times;    // sorted, with multiplicity
  std::vector<double> censor_times;   // sorted, with multiplicity
  std::vector<double> step_levels;    // distinct event levels, ascending
  std::vector<double> step_survival;  // S just after each step level

  // Right-continuous survival estimate; S(0^-) = 1.
  double survival(double z) const;
  double cdf(double z) const { return 1.0 - survival(z); }
};

KMEstimator km_fit(const History& history);

// Generalized inverse inf{z in [0,B] : 1 - S(z) >= alpha}; returns `bound`
// when the estimated mass never reaches alpha.
double km_quantile(const KMEstimator& est, double alpha, double bound);

ContextVector encode_context(const History& history, double bound);
// Same, with an external forecast-quantile block prepended (44-dim output).
ContextVector encode_context(const History& history, double bound,
                             const std::optional<Eigen::VectorXd>& forecast_quantiles);

// Incremental pseudo-history state for autoregressive completion: supports
// appending steps, flipping a censored step into a revealed demand, and
// re-encoding the context without re-sorting from scratch.
class ContextBuilder {
 public:
  explicit ContextBuilder(double bound) : bound_(bound) {}

  void reserve(std::size_t n);
  void clear();
  void assign(const ContextBuilder& other);  // copy state, reusing capacity

  void push(double order, double sales, bool censored);
  // Step `seq_index` must currently be censored; it becomes an uncensored
  // entry with the given demand as its sales value (order is kept).
  void replace_with_event(std::size_t seq_index, double demand);

  std::size_t size() const { return seq_.size(); }
  const HistoryStep& step(std::size_t i) const { return seq_[i]; }
  double bound() const { return bound_; }

  // Writes the 25-dim context into `out` (resized if needed).
  void encode(ContextVector& out) const;
  // Context encoded from the first `prefix_len` sequence entries only
  // (used by the ablation that keeps pseudo-future out of the KM block).
  void encode_prefix(std::size_t prefix_len, ContextVector& out) const;

 private:
  void sorted_insert(double level, bool event);
  void sorted_erase(double level, bool event);

  double bound_;
  std::vector<HistoryStep> seq_;
  std::vector<double> levels_;       // sorted ascending, events before censors at ties
  std::vector<std::uint8_t> flags_;  // 1 = event
  std::size_t n_censored_ = 0;
  double sum_proxy_ = 0.0;
  double sumsq_proxy_ = 0.0;
};

}  // namespace icgps
