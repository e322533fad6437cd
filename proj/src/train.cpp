#include "icgps/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "icgps/csv.hpp"
#include "icgps/errors.hpp"
#include "icgps/math.hpp"

namespace icgps {

double BehaviorPolicy::act(const DemandModel& task, double bound, Rng& rng) const {
  switch (kind) {
    case Kind::UniformMix: {
      const double u = uniform01(rng);
      if (u < max_order_prob) return bound;
      return uniform_in(rng, 0.0, bound);
    }
    case Kind::FixedOrder:
      return std::clamp(value, 0.0, bound);
    case Kind::TaskQuantile:
      return std::clamp(demand_quantile(task, value), 0.0, bound);
  }
  throw std::logic_error("BehaviorPolicy::act");
}

std::vector<Episode> generate_corpus(const TaskPrior& prior, const BehaviorPolicy& behavior,
                                     int n_tasks, int horizon, double bound, std::uint64_t seed) {
  if (n_tasks < 1) throw std::invalid_argument("generate_corpus: n_tasks must be >= 1");
  std::vector<Episode> corpus(static_cast<std::size_t>(n_tasks));
  CostParams domain(1.0, 1.0, bound);
  for (int i = 0; i < n_tasks; ++i) {
    Rng rng = make_rng(seed, "corpus-episode", static_cast<std::uint64_t>(i));
    Episode& ep = corpus[static_cast<std::size_t>(i)];
    ep.id = "ep" + std::to_string(i);
    ep.task = sample_task(prior, rng);
    ep.steps.reserve(static_cast<std::size_t>(horizon));
    ep.demands.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
      const double d = demand_sample(*ep.task, rng, bound);
      const double x = behavior.act(*ep.task, bound, rng);
      ep.steps.push_back({x, censor(x, d, domain)});
      ep.demands.push_back(d);
    }
    ep.demand_known.assign(ep.steps.size(), 1);
  }
  return corpus;
}

PrefixDataset build_prefix_dataset(const std::vector<Episode>& corpus, double bound) {
  std::size_t total = 0;
  for (const auto& ep : corpus) total += ep.steps.size();
  PrefixDataset ds;
  ds.contexts.resize(kContextDim, static_cast<long>(total));
  ds.orders.reserve(total);
  ds.obs.reserve(total);
  ds.episode_index.reserve(total);
  ContextVector ctx(kContextDim);
  std::size_t col = 0;
  for (std::size_t e = 0; e < corpus.size(); ++e) {
    const Episode& ep = corpus[e];
    ContextBuilder builder(bound);
    builder.reserve(ep.steps.size());
    for (const auto& step : ep.steps) {
      builder.encode(ctx);
      ds.contexts.col(static_cast<long>(col++)) = ctx;
      ds.orders.push_back(step.order);
      ds.obs.push_back(step.obs);
      ds.episode_index.push_back(static_cast<int>(e));
      builder.push(step.order, step.obs.sales, step.obs.censored);
    }
  }
  return ds;
}

PrefixBatcher::PrefixBatcher(std::size_t n, int batch_size, Rng rng)
    : perm_(n), batch_size_(batch_size), rng_(rng) {
  if (n == 0) throw std::invalid_argument("PrefixBatcher: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("PrefixBatcher: batch_size must be >= 1");
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  reshuffle();
}

void PrefixBatcher::reshuffle() {
  for (std::size_t i = perm_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(i));
    std::swap(perm_[i - 1], perm_[std::min(j, i - 1)]);
  }
  cursor_ = 0;
}

const std::vector<std::size_t>& PrefixBatcher::next_batch() {
  if (cursor_ >= perm_.size()) reshuffle();
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size_),
                                                 perm_.size() - cursor_);
  batch_.assign(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return batch_;
}

AdamWState AdamWState::zeros_like(const HyperNetwork& net) {
  return {NetGrad::zeros_like(net), NetGrad::zeros_like(net), 0};
}

void adamw_step(HyperNetwork& net, const NetGrad& grad, AdamWState& state, double learning_rate,
                double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (grad.weights.size() != net.weights.size())
    throw std::invalid_argument("adamw_step: gradient/network layer mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (grad.weights[l].rows() != net.weights[l].rows() ||
        grad.weights[l].cols() != net.weights[l].cols())
      throw std::invalid_argument("adamw_step: gradient shape mismatch");
    {
      auto& m = state.m.weights[l];
      auto& v = state.v.weights[l];
      m = beta1 * m + (1.0 - beta1) * grad.weights[l];
      v = (beta2 * v.array() + (1.0 - beta2) * grad.weights[l].array().square()).matrix();
      const Eigen::ArrayXXd mhat = m.array() / bc1;
      const Eigen::ArrayXXd vhat = v.array() / bc2;
      net.weights[l].array() -= learning_rate * (mhat / (vhat.sqrt() + eps));
      net.weights[l] -= learning_rate * weight_decay * net.weights[l];
    }
    {
      auto& m = state.m.biases[l];
      auto& v = state.v.biases[l];
      m = beta1 * m + (1.0 - beta1) * grad.biases[l];
      v = (beta2 * v.array() + (1.0 - beta2) * grad.biases[l].array().square()).matrix();
      const Eigen::ArrayXd mhat = m.array() / bc1;
      const Eigen::ArrayXd vhat = v.array() / bc2;
      net.biases[l].array() -= learning_rate * (mhat / (vhat.sqrt() + eps));
      net.biases[l] -= learning_rate * weight_decay * net.biases[l];
    }
  }
}

namespace {

// Mean NLL and gradient over a batch. Work is split over a fixed shard count
// and reduced in shard order, so results do not depend on the thread count.
double batch_grad(const CompletionModel& model, const PrefixDataset& ds,
                  const std::vector<std::size_t>& batch, int shards, int threads, NetGrad& grad,
                  std::vector<NetGrad>& shard_grads, std::vector<FlowWorkspace>& shard_ws) {
  const std::size_t n = batch.size();
  const int s_count = std::max(1, std::min<int>(shards, static_cast<int>(n)));
  if (shard_grads.size() < static_cast<std::size_t>(s_count)) {
    shard_grads.resize(static_cast<std::size_t>(s_count), NetGrad::zeros_like(model.net));
    shard_ws.resize(static_cast<std::size_t>(s_count));
  }
  std::vector<double> shard_nll(static_cast<std::size_t>(s_count), 0.0);
  const double w = 1.0 / static_cast<double>(n);

  auto run_shard = [&](int s) {
    NetGrad& g = shard_grads[static_cast<std::size_t>(s)];
    g.set_zero();
    FlowWorkspace& ws = shard_ws[static_cast<std::size_t>(s)];
    const std::size_t lo = n * static_cast<std::size_t>(s) / static_cast<std::size_t>(s_count);
    const std::size_t hi = n * static_cast<std::size_t>(s + 1) / static_cast<std::size_t>(s_count);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t idx = batch[i];
      acc += censored_nll_grad(model, ds.contexts.col(static_cast<long>(idx)), ds.orders[idx],
                               ds.obs[idx], g, ws, w);
    }
    shard_nll[static_cast<std::size_t>(s)] = acc;
  };

  if (threads > 1 && s_count > 1) {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int n_workers = std::min(threads, s_count);
    for (int t = 0; t < n_workers; ++t) {
      pool.emplace_back([&]() {
        for (;;) {
          const int s = next.fetch_add(1);
          if (s >= s_count) return;
          run_shard(s);
        }
      });
    }
    for (auto& th : pool) th.join();
  } else {
    for (int s = 0; s < s_count; ++s) run_shard(s);
  }

  grad.set_zero();
  double total = 0.0;
  for (int s = 0; s < s_count; ++s) {
    grad.add_scaled(shard_grads[static_cast<std::size_t>(s)], 1.0);
    total += shard_nll[static_cast<std::size_t>(s)];
  }
  return total / static_cast<double>(n);
}

double dataset_nll_per_episode(const CompletionModel& model, const PrefixDataset& ds,
                               int n_episodes) {
  if (n_episodes == 0) return 0.0;
  FlowWorkspace ws;
  NetGrad unused;  // not used; value-only path below
  (void)unused;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    hyper_forward(model, ds.contexts.col(static_cast<long>(i)), ws);
    // Value-only evaluation of the censored NLL.
    const CensoredObs& o = ds.obs[i];
    if (o.censored) {
      const double surv =
          normal_sf(flow_transform_inv(model.shape, ws.params, ds.orders[i]));
      total += -std::log(std::max(surv, kEpsSurvival));
    } else {
      const double z = flow_transform_inv(model.shape, ws.params, o.sales);
      const int K = model.shape.bins;
      double slope;
      if (o.sales < ws.params.heights(0))
        slope = ws.params.slope_left;
      else if (o.sales >= ws.params.heights(K))
        slope = ws.params.slope_right;
      else {
        int lo = 0, hi = K;
        while (hi - lo > 1) {
          const int mid = (lo + hi) / 2;
          if (ws.params.heights(mid) <= o.sales)
            lo = mid;
          else
            hi = mid;
        }
        slope = (ws.params.heights(lo + 1) - ws.params.heights(lo)) / model.shape.dz();
      }
      total += -(normal_log_pdf(z) - std::log(slope));
    }
  }
  return total / static_cast<double>(n_episodes);
}

}  // namespace

std::pair<CompletionModel, TrainReport> train(const std::vector<Episode>& corpus,
                                              const FlowShape& shape, const TrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");

  // Episode-level train/validation split.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = make_rng(config.seed, "train-split");
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(split_rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::size_t n_val = static_cast<std::size_t>(std::lround(config.val_fraction *
                                                           static_cast<double>(corpus.size())));
  if (corpus.size() >= 2 && n_val == 0 && config.val_fraction > 0.0) n_val = 1;
  n_val = std::min(n_val, corpus.size() - 1);
  std::vector<Episode> train_eps, val_eps;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? val_eps : train_eps).push_back(corpus[order[i]]);
  if (val_eps.empty()) val_eps = train_eps;  // degenerate single-episode corpora

  const PrefixDataset train_ds = build_prefix_dataset(train_eps, shape.demand_bound);
  const PrefixDataset val_ds = build_prefix_dataset(val_eps, shape.demand_bound);

  CompletionModel model;
  model.shape = shape;
  Rng init_rng = make_rng(config.seed, "train-init");
  model.net = HyperNetwork::init(kContextDim, config.hidden, shape, init_rng);

  // Input normalization from the training contexts, frozen before the first
  // gradient step.
  model.net.norm_mean = train_ds.contexts.rowwise().mean();
  const Eigen::ArrayXd var =
      (train_ds.contexts.colwise() - model.net.norm_mean).array().square().rowwise().mean();
  model.net.norm_std = var.sqrt().max(1e-6).matrix();

  AdamWState opt = AdamWState::zeros_like(model.net);
  NetGrad grad = NetGrad::zeros_like(model.net);
  std::vector<NetGrad> shard_grads;
  std::vector<FlowWorkspace> shard_ws;

  PrefixBatcher batcher(train_ds.size(), config.batch_size,
                        make_rng(config.seed, "train-batches"));
  const std::size_t batches_per_epoch =
      (train_ds.size() + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size);

  TrainReport report;
  CompletionModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stale = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_nll = 0.0;
    for (std::size_t bi = 0; bi < batches_per_epoch; ++bi) {
      const auto& batch = batcher.next_batch();
      const double nll = batch_grad(model, train_ds, batch, config.grad_shards, config.threads,
                                    grad, shard_grads, shard_ws);
      if (!std::isfinite(nll)) throw TrainError(epoch, "non-finite training loss");
      if (config.grad_clip > 0.0) {
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > config.grad_clip) grad.scale(config.grad_clip / norm);
      }
      adamw_step(model.net, grad, opt, config.learning_rate, config.weight_decay);
      epoch_nll += nll;
    }
    epoch_nll /= static_cast<double>(batches_per_epoch);
    const double val = dataset_nll_per_episode(model, val_ds, static_cast<int>(val_eps.size()));
    if (!std::isfinite(val)) throw TrainError(epoch, "non-finite validation loss");
    report.train_nll.push_back(epoch_nll);
    report.val_nll.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }

  report.best_epoch = best_epoch;
  report.best_val_nll = best_val;
  return {best, report};
}

double validation_nll(const CompletionModel& model, const std::vector<Episode>& corpus_val) {
  if (corpus_val.empty()) throw std::invalid_argument("validation_nll: empty validation set");
  const PrefixDataset ds = build_prefix_dataset(corpus_val, model.shape.demand_bound);
  return dataset_nll_per_episode(model, ds, static_cast<int>(corpus_val.size()));
}

double true_model_nll(const Episode& episode) {
  if (!episode.task) throw std::invalid_argument("true_model_nll: episode has no task");
  const DemandModel& task = *episode.task;
  double total = 0.0;
  for (const auto& step : episode.steps) {
    if (step.obs.censored) {
      const double surv = 1.0 - demand_cdf(task, step.order);
      total += -std::log(std::max(surv, kEpsSurvival));
    } else {
      total += -std::log(std::max(demand_density(task, step.obs.sales), 1e-300));
    }
  }
  return total;
}

DeltaObs delta_obs_hat(const CompletionModel& model, const std::vector<Episode>& corpus_val) {
  if (corpus_val.empty()) throw std::invalid_argument("delta_obs_hat: empty validation set");
  std::vector<double> per_episode;
  per_episode.reserve(corpus_val.size());
  FlowWorkspace ws;
  ContextVector ctx(kContextDim);
  for (const auto& ep : corpus_val) {
    if (!ep.task) throw std::invalid_argument("delta_obs_hat: episode lacks its true DemandModel");
    ContextBuilder builder(model.shape.demand_bound);
    builder.reserve(ep.steps.size());
    double model_nll = 0.0;
    for (const auto& step : ep.steps) {
      builder.encode(ctx);
      model_nll += censored_nll(model, ctx, step.order, step.obs);
      builder.push(step.order, step.obs.sales, step.obs.censored);
    }
    per_episode.push_back(model_nll - true_model_nll(ep));
  }
  DeltaObs out;
  out.episodes = static_cast<int>(per_episode.size());
  double mean = 0.0;
  for (double v : per_episode) mean += v;
  mean /= static_cast<double>(per_episode.size());
  double ss = 0.0;
  for (double v : per_episode) ss += (v - mean) * (v - mean);
  out.mean = mean;
  out.se = per_episode.size() > 1
               ? std::sqrt(ss / (static_cast<double>(per_episode.size()) *
                                 (static_cast<double>(per_episode.size()) - 1.0)))
               : 0.0;
  return out;
}

void write_corpus_csv(const std::string& path, const std::vector<Episode>& corpus) {
  CsvWriter writer(path, {"episode_id", "t", "order", "sales", "censored", "demand", "true_family",
                          "true_p0", "true_p1"});
  for (const auto& ep : corpus) {
    std::string fam, p0, p1;
    if (ep.task) {
      fam = family_name(ep.task->family);
      if (!ep.task->params.empty()) p0 = fmt_double(ep.task->params[0]);
      if (ep.task->params.size() > 1) p1 = fmt_double(ep.task->params[1]);
    }
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      const auto& s = ep.steps[t];
      const bool has_demand = t < ep.demands.size() &&
                              (ep.demand_known.empty() || ep.demand_known[t]);
      writer.row({ep.id, std::to_string(t + 1), fmt_double(s.order), fmt_double(s.obs.sales),
                  s.obs.censored ? "1" : "0", has_demand ? fmt_double(ep.demands[t]) : "", fam, p0,
                  p1});
    }
  }
}

std::vector<Episode> read_corpus_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(1, "empty file");
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_id = col("episode_id"), c_t = col("t"), c_order = col("order"),
            c_sales = col("sales"), c_cens = col("censored"), c_demand = col("demand");
  const int c_fam = col("true_family"), c_p0 = col("true_p0"), c_p1 = col("true_p1");
  if (c_id < 0 || c_t < 0 || c_order < 0 || c_sales < 0 || c_cens < 0)
    throw DataError(1, "header must contain episode_id,t,order,sales,censored");

  std::vector<Episode> corpus;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_map<std::string, long> last_t;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < header.size()) throw DataError(row, "too few columns");
    const std::string& id = f[static_cast<std::size_t>(c_id)];
    long t;
    double order_v, sales_v;
    try {
      t = std::stol(f[static_cast<std::size_t>(c_t)]);
      order_v = std::stod(f[static_cast<std::size_t>(c_order)]);
      sales_v = std::stod(f[static_cast<std::size_t>(c_sales)]);
    } catch (const std::exception&) {
      throw DataError(row, "unparseable numeric field");
    }
    const std::string& cens_s = f[static_cast<std::size_t>(c_cens)];
    if (cens_s != "0" && cens_s != "1") throw DataError(row, "censored must be 0 or 1");
    const bool censored = cens_s == "1";
    if (censored && sales_v != order_v)
      throw DataError(row, "censored step must have sales equal to order");
    if (order_v < 0.0 || sales_v < 0.0) throw DataError(row, "negative order or sales");
    if (!censored && sales_v > order_v) throw DataError(row, "uncensored sales exceed order");

    auto [it, inserted] = index.try_emplace(id, corpus.size());
    if (inserted) {
      corpus.emplace_back();
      corpus.back().id = id;
      last_t[id] = 0;
    }
    if (t != last_t[id] + 1) throw DataError(row, "episode time index not consecutive from 1");
    last_t[id] = t;

    Episode& ep = corpus[it->second];
    ep.steps.push_back({order_v, {sales_v, censored}});
    double demand_v = sales_v;
    bool known = false;
    if (c_demand >= 0 && static_cast<std::size_t>(c_demand) < f.size() &&
        !f[static_cast<std::size_t>(c_demand)].empty()) {
      try {
        demand_v = std::stod(f[static_cast<std::size_t>(c_demand)]);
      } catch (const std::exception&) {
        throw DataError(row, "unparseable demand");
      }
      known = true;
      if (censored && demand_v <= order_v)
        throw DataError(row, "censored step requires demand above the order");
      if (!censored && demand_v != sales_v)
        throw DataError(row, "uncensored step requires demand equal to sales");
    }
    ep.demands.push_back(demand_v);
    ep.demand_known.push_back(known ? 1 : 0);
    if (c_fam >= 0 && !ep.task && !f[static_cast<std::size_t>(c_fam)].empty()) {
      std::vector<double> params;
      if (c_p0 >= 0 && !f[static_cast<std::size_t>(c_p0)].empty())
        params.push_back(std::stod(f[static_cast<std::size_t>(c_p0)]));
      if (c_p1 >= 0 && !f[static_cast<std::size_t>(c_p1)].empty())
        params.push_back(std::stod(f[static_cast<std::size_t>(c_p1)]));
      DemandModel task{family_from_name(f[static_cast<std::size_t>(c_fam)]), params, {}, {}};
      validate(task);
      ep.task = task;
    }
  }
  return corpus;
}

}  // namespace icgps
