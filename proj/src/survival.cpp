#include "icgps/survival.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icgps {

const double kQuantileGrid[kQuantileGridSize] = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35,
                                                 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
                                                 0.75, 0.80, 0.85, 0.90, 0.95};

double KMEstimator::survival(double z) const {
  // Largest step level <= z.
  auto it = std::upper_bound(step_levels.begin(), step_levels.end(), z);
  if (it == step_levels.begin()) return 1.0;
  return step_survival[static_cast<std::size_t>(it - step_levels.begin()) - 1];
}

namespace {

struct Entry {
  double level;
  bool event;
};

// Shared product-limit walk. Visits distinct event levels in order and
// reports the survival value after each. While no censored entry has been
// consumed the survival is computed as an exact integer ratio so that the
// no-censoring case reproduces the empirical CDF bit-for-bit.
template <typename Visitor>
void product_limit_walk(const std::vector<Entry>& sorted, Visitor&& visit) {
  const std::size_t n = sorted.size();
  double surv = 1.0;
  std::size_t cum_events = 0;
  bool censored_seen = false;
  std::size_t i = 0;
  while (i < n) {
    const double level = sorted[i].level;
    const std::size_t at_risk = n - i;
    std::size_t d = 0;
    while (i < n && sorted[i].level == level && sorted[i].event) {
      ++d;
      ++i;
    }
    std::size_t c = 0;
    while (i < n && sorted[i].level == level && !sorted[i].event) {
      ++c;
      ++i;
    }
    if (d > 0) {
      if (!censored_seen) {
        cum_events += d;
        surv = static_cast<double>(n - cum_events) / static_cast<double>(n);
      } else {
        surv *= static_cast<double>(at_risk - d) / static_cast<double>(at_risk);
      }
      visit(level, surv);
    }
    if (c > 0) censored_seen = true;
  }
}

void sort_entries(std::vector<Entry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.level != b.level) return a.level < b.level;
    return a.event && !b.event;  // events first at ties
  });
}

}  // namespace

KMEstimator km_fit(const History& history) {
  KMEstimator est;
  std::vector<Entry> entries;
  entries.reserve(history.size());
  for (const auto& s : history.steps) {
    if (s.obs.censored) {
      est.censor_times.push_back(s.order);
      entries.push_back({s.order, false});
    } else {
      est.event_times.push_back(s.obs.sales);
      entries.push_back({s.obs.sales, true});
    }
  }
  std::sort(est.event_times.begin(), est.event_times.end());
  std::sort(est.censor_times.begin(), est.censor_times.end());
  sort_entries(entries);
  product_limit_walk(entries, [&](double level, double surv) {
    est.step_levels.push_back(level);
    est.step_survival.push_back(surv);
  });
  return est;
}

double km_quantile(const KMEstimator& est, double alpha, double bound) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("km_quantile: alpha outside (0,1)");
  for (std::size_t i = 0; i < est.step_levels.size(); ++i) {
    if (1.0 - est.step_survival[i] >= alpha) return std::min(est.step_levels[i], bound);
  }
  return bound;
}

namespace {

void stats_block(const std::vector<HistoryStep>& seq, std::size_t n_censored, double sum_proxy,
                 double sumsq_proxy, double* out) {
  const std::size_t n = seq.size();
  if (n == 0) {
    for (int i = 0; i < kStatsSize; ++i) out[i] = 0.0;
    return;
  }
  const double mean = sum_proxy / static_cast<double>(n);
  const double var = std::max(0.0, sumsq_proxy / static_cast<double>(n) - mean * mean);
  out[0] = seq.back().order;
  out[1] = seq.back().obs.sales;
  out[2] = mean;
  out[3] = std::sqrt(var);
  out[4] = static_cast<double>(n_censored) / static_cast<double>(n);
  out[5] = static_cast<double>(n);
}

}  // namespace

ContextVector encode_context(const History& history, double bound) {
  ContextBuilder builder(bound);
  builder.reserve(history.size());
  for (const auto& s : history.steps) builder.push(s.order, s.obs.sales, s.obs.censored);
  ContextVector out;
  builder.encode(out);
  return out;
}

ContextVector encode_context(const History& history, double bound,
                             const std::optional<Eigen::VectorXd>& forecast_quantiles) {
  ContextVector base = encode_context(history, bound);
  if (!forecast_quantiles) return base;
  if (forecast_quantiles->size() != kQuantileGridSize)
    throw std::invalid_argument("encode_context: forecast block must have 19 entries");
  ContextVector out(kQuantileGridSize + kContextDim);
  out.head(kQuantileGridSize) = *forecast_quantiles;
  out.tail(kContextDim) = base;
  return out;
}

void ContextBuilder::reserve(std::size_t n) {
  seq_.reserve(n);
  levels_.reserve(n);
  flags_.reserve(n);
}

void ContextBuilder::clear() {
  seq_.clear();
  levels_.clear();
  flags_.clear();
  n_censored_ = 0;
  sum_proxy_ = 0.0;
  sumsq_proxy_ = 0.0;
}

void ContextBuilder::assign(const ContextBuilder& other) {
  bound_ = other.bound_;
  seq_ = other.seq_;
  levels_ = other.levels_;
  flags_ = other.flags_;
  n_censored_ = other.n_censored_;
  sum_proxy_ = other.sum_proxy_;
  sumsq_proxy_ = other.sumsq_proxy_;
}

void ContextBuilder::sorted_insert(double level, bool event) {
  // Upper bound on the key (level, rank) with rank 0 for events and 1 for
  // censored entries, so events sort before censored entries at ties.
  const int rank = event ? 0 : 1;
  std::size_t lo = 0, hi = levels_.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const int mid_rank = flags_[mid] ? 0 : 1;
    const bool mid_greater = levels_[mid] > level || (levels_[mid] == level && mid_rank > rank);
    if (mid_greater)
      hi = mid;
    else
      lo = mid + 1;
  }
  levels_.insert(levels_.begin() + static_cast<std::ptrdiff_t>(lo), level);
  flags_.insert(flags_.begin() + static_cast<std::ptrdiff_t>(lo), event ? 1 : 0);
}

void ContextBuilder::sorted_erase(double level, bool event) {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), level);
  std::size_t i = static_cast<std::size_t>(it - levels_.begin());
  while (i < levels_.size() && levels_[i] == level) {
    if ((flags_[i] != 0) == event) {
      levels_.erase(levels_.begin() + static_cast<std::ptrdiff_t>(i));
      flags_.erase(flags_.begin() + static_cast<std::ptrdiff_t>(i));
      return;
    }
    ++i;
  }
  throw std::logic_error("ContextBuilder: entry to erase not found");
}

void ContextBuilder::push(double order, double sales, bool censored) {
  seq_.push_back({order, {sales, censored}});
  const double proxy = censored ? order : sales;
  sum_proxy_ += proxy;
  sumsq_proxy_ += proxy * proxy;
  if (censored) {
    ++n_censored_;
    sorted_insert(order, false);
  } else {
    sorted_insert(sales, true);
  }
}

void ContextBuilder::replace_with_event(std::size_t seq_index, double demand) {
  HistoryStep& s = seq_[seq_index];
  if (!s.obs.censored) throw std::logic_error("replace_with_event: step is not censored");
  const double old_level = s.order;
  sorted_erase(old_level, false);
  sorted_insert(demand, true);
  sum_proxy_ += demand - old_level;
  sumsq_proxy_ += demand * demand - old_level * old_level;
  --n_censored_;
  s.obs = {demand, false};
}

void ContextBuilder::encode(ContextVector& out) const {
  if (out.size() != kContextDim) out.resize(kContextDim);
  const std::size_t n = levels_.size();
  double* q = out.data();
  if (n == 0) {
    for (int j = 0; j < kQuantileGridSize; ++j) q[j] = 0.5 * bound_;
    stats_block(seq_, n_censored_, sum_proxy_, sumsq_proxy_, q + kQuantileGridSize);
    return;
  }
  // Fused product-limit walk collecting grid quantiles as 1-S crosses each
  // target level.
  double surv = 1.0;
  std::size_t cum_events = 0;
  bool censored_seen = false;
  int qi = 0;
  std::size_t i = 0;
  while (i < n && qi < kQuantileGridSize) {
    const double level = levels_[i];
    const std::size_t at_risk = n - i;
    std::size_t d = 0;
    while (i < n && levels_[i] == level && flags_[i]) {
      ++d;
      ++i;
    }
    std::size_t c = 0;
    while (i < n && levels_[i] == level && !flags_[i]) {
      ++c;
      ++i;
    }
    if (d > 0) {
      if (!censored_seen) {
        cum_events += d;
        surv = static_cast<double>(n - cum_events) / static_cast<double>(n);
      } else {
        surv *= static_cast<double>(at_risk - d) / static_cast<double>(at_risk);
      }
      const double f = 1.0 - surv;
      while (qi < kQuantileGridSize && f >= kQuantileGrid[qi]) {
        q[qi] = std::min(level, bound_);
        ++qi;
      }
    }
    if (c > 0) censored_seen = true;
  }
  while (qi < kQuantileGridSize) q[qi++] = bound_;
  stats_block(seq_, n_censored_, sum_proxy_, sumsq_proxy_, q + kQuantileGridSize);
}

void ContextBuilder::encode_prefix(std::size_t prefix_len, ContextVector& out) const {
  ContextBuilder tmp(bound_);
  tmp.reserve(prefix_len);
  for (std::size_t i = 0; i < prefix_len && i < seq_.size(); ++i)
    tmp.push(seq_[i].order, seq_[i].obs.sales, seq_[i].obs.censored);
  tmp.encode(out);
}

}  // namespace icgps
