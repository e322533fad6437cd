#include "icgps/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "icgps/csv.hpp"
#include "icgps/math.hpp"

namespace icgps {

RegretCurve aggregate(const std::vector<std::vector<double>>& trajectories) {
  const std::size_t n = trajectories.size();
  if (n < 2) throw std::invalid_argument("aggregate: need at least 2 trials");
  const std::size_t T = trajectories.front().size();
  for (const auto& tr : trajectories)
    if (tr.size() != T) throw std::invalid_argument("aggregate: ragged trajectories");
  RegretCurve curve;
  curve.trials = static_cast<int>(n);
  curve.mean.assign(T, 0.0);
  curve.se.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0;
    for (const auto& tr : trajectories) mean += tr[t];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& tr : trajectories) ss += (tr[t] - mean) * (tr[t] - mean);
    curve.mean[t] = mean;
    curve.se[t] = std::sqrt(ss / (static_cast<double>(n) * (static_cast<double>(n) - 1.0)));
  }
  return curve;
}

std::vector<TrialResult> run_trial(const DemandModel& task, const std::vector<Policy*>& policies,
                                   int T, const CostParams& costs, std::uint64_t seed,
                                   int warmup_rounds) {
  if (policies.empty()) throw std::invalid_argument("run_trial: empty policy list");
  // One latent stream, generated once; every policy replays it.
  Rng stream_rng = make_rng(seed, "demand-stream");
  std::vector<double> demand(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) demand[static_cast<std::size_t>(t)] = demand_sample(task, stream_rng, costs.bound);
  const double xstar = optimal_order(task, costs);

  std::vector<TrialResult> out;
  out.reserve(policies.size());
  for (Policy* policy : policies) {
    Rng rng = make_rng(seed, "policy", hash_tag(policy->name()));
    policy->reset();
    TrialResult res;
    res.policy = policy->name();
    res.orders.reserve(static_cast<std::size_t>(T));
    res.demands = demand;
    res.losses.reserve(static_cast<std::size_t>(T));
    res.cum_regret.reserve(static_cast<std::size_t>(T));
    History h;
    double cum = 0.0;
    for (int t = 1; t <= T; ++t) {
      const double d = demand[static_cast<std::size_t>(t - 1)];
      const double x = t <= warmup_rounds ? costs.bound : policy->act(h, rng);
      res.orders.push_back(x);
      res.losses.push_back(loss(x, d, costs));
      cum += realized_regret_step(x, xstar, d, costs);
      res.cum_regret.push_back(cum);
      h.append(x, censor(x, d, costs));
    }
    out.push_back(std::move(res));
  }
  return out;
}

const RegretCurve& ExperimentResult::curve(double gamma, const std::string& policy) const {
  for (const auto& s : series)
    if (s.gamma == gamma && s.policy == policy) return s.curve;
  throw std::out_of_range("ExperimentResult: no series for requested (gamma, policy)");
}

ExperimentResult run_experiment(const std::string& name, const DemandModel& task,
                                const PolicyFactory& factory, const std::vector<double>& gammas,
                                int T, int trials, double h, double bound, std::uint64_t seed,
                                int warmup_rounds, int threads) {
  ExperimentResult result;
  result.experiment = name;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const double gamma = gammas[gi];
    const double b = h * gamma / (1.0 - gamma);
    const CostParams costs(h, b, bound);

    std::vector<std::vector<TrialResult>> per_trial(static_cast<std::size_t>(trials));
    std::atomic<int> next{0};
    auto work = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= trials) return;
        auto policies = factory(costs);
        std::vector<Policy*> ptrs;
        ptrs.reserve(policies.size());
        for (auto& p : policies) ptrs.push_back(p.get());
        per_trial[static_cast<std::size_t>(i)] = run_trial(
            task, ptrs, T, costs, derive_seed(seed, name + "-trial", gi, static_cast<std::uint64_t>(i)),
            warmup_rounds);
      }
    };
    if (threads > 1) {
      std::vector<std::thread> pool;
      for (int w = 0; w < threads; ++w) pool.emplace_back(work);
      for (auto& th : pool) th.join();
    } else {
      work();
    }

    const std::size_t n_policies = per_trial.front().size();
    for (std::size_t pi = 0; pi < n_policies; ++pi) {
      std::vector<std::vector<double>> trajs;
      trajs.reserve(per_trial.size());
      for (const auto& tr : per_trial) trajs.push_back(tr[pi].cum_regret);
      result.series.push_back({gamma, per_trial.front()[pi].policy, aggregate(trajs)});
    }
    for (int i = 0; i < trials; ++i) {
      for (int t = 1; t <= T; ++t) {
        for (std::size_t pi = 0; pi < n_policies; ++pi) {
          const TrialResult& tr = per_trial[static_cast<std::size_t>(i)][pi];
          result.rows.push_back({name, gamma, tr.policy, i, t,
                                 tr.orders[static_cast<std::size_t>(t - 1)],
                                 tr.cum_regret[static_cast<std::size_t>(t - 1)]});
        }
      }
    }
  }
  return result;
}

ExperimentResult run_q1(const Q1Config& cfg) {
  if (cfg.model == nullptr) throw std::invalid_argument("run_q1: missing completion model");
  ICGPSConfig icgps = cfg.icgps;
  icgps.horizon = cfg.horizon;
  const double k = cfg.ts_prior.k;
  PolicyFactory factory = [&, icgps, k](const CostParams& costs) {
    std::vector<std::unique_ptr<Policy>> ps;
    ps.push_back(std::make_unique<IcgpsPolicy>(cfg.model, icgps, costs));
    ps.push_back(std::make_unique<TsWeibullPolicy>(cfg.ts_prior, costs.gamma(), costs.bound));
    ps.push_back(std::make_unique<MyopicMlePolicy>(k, costs.gamma(), costs.bound));
    ps.push_back(std::make_unique<UcbPolicy>(k, costs.gamma(), costs.bound));
    return ps;
  };
  return run_experiment("q1", cfg.task, factory, cfg.gammas, cfg.horizon, cfg.trials, cfg.h,
                        cfg.bound, cfg.seed, cfg.icgps.warmup, cfg.threads);
}

Q2Result run_q2(const Q2Config& cfg) {
  Q2Result result;
  const int max_size = *std::max_element(cfg.corpus_sizes.begin(), cfg.corpus_sizes.end());
  // Nested corpora: per-episode seeds depend only on the episode index, so a
  // prefix of the full corpus is exactly the smaller corpus.
  const std::vector<Episode> full_corpus =
      generate_corpus(cfg.train_prior, cfg.behavior, std::max(max_size, cfg.capacity_corpus_size),
                      cfg.corpus_horizon, cfg.bound, derive_seed(cfg.seed, "q2-corpus"));
  const std::vector<Episode> val_corpus =
      generate_corpus(cfg.train_prior, cfg.behavior, cfg.val_episodes, cfg.corpus_horizon,
                      cfg.bound, derive_seed(cfg.seed, "q2-val"));

  auto eval_model = [&](const CompletionModel& model, const std::string& sweep, double sweep_value) {
    const DeltaObs dobs = delta_obs_hat(model, val_corpus);
    const double vnll = validation_nll(model, val_corpus);
    ICGPSConfig icgps = cfg.icgps;
    icgps.horizon = cfg.horizon;
    PolicyFactory factory = [&, icgps](const CostParams& costs) {
      std::vector<std::unique_ptr<Policy>> ps;
      ps.push_back(std::make_unique<IcgpsPolicy>(&model, icgps, costs));
      return ps;
    };
    // Trial seeds are independent of the sweep point, so every model faces
    // the same demand streams.
    ExperimentResult run = run_experiment("q2", cfg.task, factory, cfg.gammas, cfg.horizon,
                                          cfg.trials, cfg.h, cfg.bound, cfg.seed,
                                          cfg.icgps.warmup, cfg.threads);
    for (double gamma : cfg.gammas) {
      const RegretCurve& curve = run.curve(gamma, "icgps");
      result.points.push_back(
          {sweep, sweep_value, gamma, dobs.mean, curve.mean.back(), vnll});
    }
  };

  for (std::size_t si = 0; si < cfg.corpus_sizes.size(); ++si) {
    const int size = cfg.corpus_sizes[si];
    std::vector<Episode> corpus(full_corpus.begin(), full_corpus.begin() + size);
    TrainConfig tc = cfg.train_cfg;
    tc.seed = derive_seed(cfg.seed, "q2-train-data", si);
    auto [model, report] = train(corpus, cfg.flow_shape, tc);
    eval_model(model, "data", static_cast<double>(size));
  }
  if (cfg.run_capacity_sweep) {
    for (std::size_t wi = 0; wi < cfg.hidden_widths.size(); ++wi) {
      const int width = cfg.hidden_widths[wi];
      std::vector<Episode> corpus(full_corpus.begin(),
                                  full_corpus.begin() + cfg.capacity_corpus_size);
      TrainConfig tc = cfg.train_cfg;
      tc.hidden = {width, width};
      tc.seed = derive_seed(cfg.seed, "q2-train-capacity", wi);
      auto [model, report] = train(corpus, cfg.flow_shape, tc);
      eval_model(model, "capacity", static_cast<double>(width));
    }
  }

  for (const std::string& sweep : {std::string("data"), std::string("capacity")}) {
    for (double gamma : cfg.gammas) {
      std::vector<double> xs, ys;
      for (const auto& p : result.points) {
        if (p.sweep == sweep && p.gamma == gamma) {
          xs.push_back(p.delta_obs);
          ys.push_back(p.final_regret);
        }
      }
      if (xs.size() >= 3) result.spearman.emplace_back(sweep, gamma, spearman_rho(xs, ys));
    }
  }
  return result;
}

ExperimentResult run_q3(const Q3Config& cfg) {
  if (cfg.model == nullptr) throw std::invalid_argument("run_q3: missing completion model");
  ICGPSConfig icgps = cfg.icgps;
  icgps.horizon = cfg.horizon;
  PolicyFactory factory = [&, icgps](const CostParams& costs) {
    std::vector<std::unique_ptr<Policy>> ps;
    ps.push_back(std::make_unique<IcgpsPolicy>(cfg.model, icgps, costs));
    ps.push_back(std::make_unique<TsWeibullPolicy>(cfg.ts_correct, costs.gamma(), costs.bound,
                                                   "ts-correct"));
    ps.push_back(std::make_unique<TsWeibullPolicy>(cfg.ts_train, costs.gamma(), costs.bound,
                                                   "ts-train-prior"));
    return ps;
  };
  return run_experiment(cfg.label, cfg.test_task, factory, cfg.gammas, cfg.horizon, cfg.trials,
                        cfg.h, cfg.bound, cfg.seed, cfg.icgps.warmup, cfg.threads);
}

GammaPosterior fit_weibull_prior_to_tasks(const TaskPrior& prior, int n_tasks, std::uint64_t seed) {
  Rng rng = make_rng(seed, "fit-weibull-prior");
  std::vector<double> means, cvs;
  for (int i = 0; i < n_tasks; ++i) {
    const DemandModel task = sample_task(prior, rng);
    const double m = demand_mean(task);
    const double hi = demand_quantile(task, 1.0 - 1e-10);
    const double m2 = integrate(
        [&](double t) { return 2.0 * t * (1.0 - demand_cdf(task, t)); }, 0.0, hi, 1e-9);
    const double var = std::max(1e-12, m2 - m * m);
    means.push_back(m);
    cvs.push_back(std::sqrt(var) / m);
  }
  const double cv = std::accumulate(cvs.begin(), cvs.end(), 0.0) / static_cast<double>(cvs.size());
  // Weibull CV is monotone decreasing in the shape; bisect for the match.
  auto weibull_cv = [](double k) {
    const double g1 = std::tgamma(1.0 + 1.0 / k);
    const double g2 = std::tgamma(1.0 + 2.0 / k);
    return std::sqrt(std::max(1e-12, g2 / (g1 * g1) - 1.0));
  };
  double lo = 0.2, hi = 20.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (weibull_cv(mid) > cv ? lo : hi) = mid;
  }
  const double k = 0.5 * (lo + hi);
  // Mean matching at shape k: mean = Gamma(1+1/k) * rate^(-1/k).
  std::vector<double> rates;
  for (double m : means) rates.push_back(std::pow(std::tgamma(1.0 + 1.0 / k) / m, k));
  double mean_rate = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
  double var_rate = 0.0;
  for (double r : rates) var_rate += (r - mean_rate) * (r - mean_rate);
  var_rate /= std::max<double>(1.0, static_cast<double>(rates.size()) - 1.0);
  GammaPosterior prior_fit;
  prior_fit.k = k;
  if (var_rate < 1e-10 * mean_rate * mean_rate) {
    prior_fit.a = 1e4;
    prior_fit.b = 1e4 / mean_rate;
  } else {
    prior_fit.a = mean_rate * mean_rate / var_rate;
    prior_fit.b = mean_rate / var_rate;
  }
  return prior_fit;
}

namespace {
std::string group_of(const std::string& episode_id) {
  const auto pos = episode_id.find(':');
  return pos == std::string::npos ? std::string("all") : episode_id.substr(0, pos);
}
}  // namespace

std::vector<CostTableRow> evaluate_episodes(const std::vector<Episode>& episodes,
                                            const PolicyFactory& factory, const CostParams& costs,
                                            int warmup_rounds, std::uint64_t seed) {
  if (episodes.empty()) throw std::invalid_argument("evaluate_episodes: no episodes");
  struct Acc {
    double cost_sum = 0.0;
    int episodes = 0;
    bool lb = false;
  };
  std::map<std::string, std::map<std::string, Acc>> table;  // policy -> group -> acc
  std::vector<std::string> policy_order, group_order;

  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    const std::string group = group_of(ep.id);
    if (std::find(group_order.begin(), group_order.end(), group) == group_order.end())
      group_order.push_back(group);
    auto policies = factory(costs);
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      Policy* policy = policies[pi].get();
      if (e == 0) policy_order.push_back(policy->name());
      Rng rng = make_rng(seed, "eval-episode", static_cast<std::uint64_t>(e),
                         hash_tag(policy->name()));
      policy->reset();
      History h;
      double total = 0.0;
      bool lb = false;
      for (std::size_t t = 0; t < ep.steps.size(); ++t) {
        const bool known = ep.demand_known.empty() || ep.demand_known[t];
        double d = known && t < ep.demands.size() ? ep.demands[t] : ep.steps[t].obs.sales;
        d = std::clamp(d, 0.0, costs.bound);
        if (!known && ep.steps[t].obs.censored) lb = true;  // cost is a lower bound
        const double x = static_cast<int>(t) < warmup_rounds
                             ? costs.bound
                             : std::clamp(policy->act(h, rng), 0.0, costs.bound);
        total += loss(x, d, costs);
        h.append(x, censor(x, d, costs));
      }
      Acc& acc = table[policy->name()][group];
      acc.cost_sum += total / static_cast<double>(ep.steps.size());
      acc.episodes += 1;
      acc.lb = acc.lb || lb;
    }
  }

  std::vector<CostTableRow> rows;
  for (const auto& pname : policy_order) {
    for (const auto& gname : group_order) {
      const Acc& acc = table[pname][gname];
      if (acc.episodes == 0) continue;
      rows.push_back({pname, gname, acc.cost_sum / acc.episodes, acc.episodes, acc.lb});
    }
  }
  return rows;
}

std::vector<Episode> make_demo_store(std::uint64_t seed, double bound, int horizon) {
  TaskPrior prior;
  prior.families.push_back(
      {DemandFamily::Weibull, {ParamSpec::gamma(2.0, 4.0), ParamSpec::fixed(1.5)}});
  std::vector<Episode> store =
      generate_corpus(prior, BehaviorPolicy::task_quantile(0.3), 20, horizon, bound,
                      derive_seed(seed, "demo-store"));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const char* group = i < store.size() / 2 ? "north" : "south";
    store[i].id = std::string(group) + ":e" + std::to_string(i + 1);
  }
  return store;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman_rho: need matched samples, n >= 2");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  CsvWriter writer(path, {"experiment", "gamma", "policy", "trial", "t", "order", "cum_regret"});
  for (const auto& r : rows)
    writer.row({r.experiment, fmt_double(r.gamma), r.policy, std::to_string(r.trial),
                std::to_string(r.t), fmt_double(r.order), fmt_double(r.cum_regret)});
}

namespace {
const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#17becf"};
}

void write_regret_svg(const std::string& path, const std::string& title,
                      const std::vector<ExperimentResult::Series>& series) {
  if (series.empty()) throw std::invalid_argument("write_regret_svg: no series");
  const int W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  const std::size_t T = series.front().curve.mean.size();
  double ymax = 1e-9, ymin = 0.0;
  for (const auto& s : series)
    for (std::size_t t = 0; t < T; ++t) {
      ymax = std::max(ymax, s.curve.mean[t] + s.curve.se[t]);
      ymin = std::min(ymin, s.curve.mean[t] - s.curve.se[t]);
    }
  const double xscale = static_cast<double>(W - ml - mr) / static_cast<double>(T);
  const double yspan = ymax - ymin;
  auto px = [&](double t) { return ml + t * xscale; };
  auto py = [&](double v) { return mt + (ymax - v) / yspan * (H - mt - mb); };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" << title << "</text>\n";
  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << py(ymin) << "\" x2=\"" << W - mr << "\" y2=\""
      << py(ymin) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << py(ymin)
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + yspan * k / 4.0;
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(v) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt_double(std::round(v * 100.0) / 100.0) << "</text>\n";
    const double tt = static_cast<double>(T) * k / 4.0;
    out << "<text x=\"" << px(tt) << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << static_cast<long>(tt) << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">t</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kSeriesColors[si % (sizeof(kSeriesColors) / sizeof(char*))];
    // +-1 SE band
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (std::size_t t = 0; t < T; ++t)
      out << px(static_cast<double>(t + 1)) << ',' << py(s.curve.mean[t] + s.curve.se[t]) << ' ';
    for (std::size_t t = T; t-- > 0;)
      out << px(static_cast<double>(t + 1)) << ',' << py(s.curve.mean[t] - s.curve.se[t]) << ' ';
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < T; ++t)
      out << px(static_cast<double>(t + 1)) << ',' << py(s.curve.mean[t]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 16 + 16 * static_cast<int>(si)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << s.policy
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace icgps
