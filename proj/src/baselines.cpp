#include "icgps/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "icgps/math.hpp"

namespace icgps {

GammaPosterior gamma_update(GammaPosterior post, double order, const CensoredObs& obs) {
  if (obs.censored) {
    if (obs.sales != order)
      throw std::invalid_argument("gamma_update: censored observation with sales != order");
    post.b += std::pow(order, post.k);
  } else {
    post.a += 1.0;
    post.b += std::pow(obs.sales, post.k);
  }
  return post;
}

namespace {
double weibull_gamma_quantile(double rate, double k, double gamma) {
  return std::pow(-std::log1p(-gamma) / rate, 1.0 / k);
}
}  // namespace

double ts_weibull_act(const GammaPosterior& post, double gamma, double bound, Rng& rng) {
  if (!(post.a > 0.0 && post.b > 0.0)) throw std::invalid_argument("ts_weibull_act: bad posterior");
  const double rate = gamma_sample(rng, post.a, post.b);
  return std::min(bound, weibull_gamma_quantile(rate, post.k, gamma));
}

double myopic_mle_act(const History& history, double k, double gamma, double bound) {
  double n_u = 0.0, sum_dk = 0.0;
  for (const auto& s : history.steps) {
    if (!s.obs.censored) {
      n_u += 1.0;
      sum_dk += std::pow(s.obs.sales, k);
    }
  }
  if (n_u == 0.0 || sum_dk <= 0.0) return bound;
  const double rate = n_u / sum_dk;
  return std::min(bound, weibull_gamma_quantile(rate, k, gamma));
}

double ucb_act(const History& history, double k, double gamma, double bound, double conf) {
  double n_u = 0.0, sum_sk = 0.0;
  for (const auto& s : history.steps) {
    if (!s.obs.censored) n_u += 1.0;
    sum_sk += std::pow(s.obs.sales, k);  // min(d, x)^k is sales^k in both cases
  }
  if (n_u == 0.0 || sum_sk <= 0.0) return bound;
  const double rate_opt = gamma_quantile(n_u, sum_sk, conf);
  return std::min(bound, weibull_gamma_quantile(rate_opt, k, gamma));
}

double saa_act(const History& history, double gamma, double bound) {
  if (history.empty()) return bound;
  std::vector<double> sales;
  sales.reserve(history.size());
  for (const auto& s : history.steps) sales.push_back(s.obs.sales);
  const std::size_t n = sales.size();
  std::size_t m = static_cast<std::size_t>(
      std::ceil(gamma * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::nth_element(sales.begin(), sales.begin() + static_cast<std::ptrdiff_t>(m - 1), sales.end());
  return std::min(bound, sales[m - 1]);
}

double km_act(const History& history, double gamma, double bound) {
  if (history.empty()) return bound;
  return km_quantile(km_fit(history), gamma, bound);
}

}  // namespace icgps
