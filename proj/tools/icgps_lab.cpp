#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "icgps/config.hpp"
#include "icgps/csv.hpp"
#include "icgps/diagnostics.hpp"
#include "icgps/errors.hpp"
#include "icgps/harness.hpp"

namespace fs = std::filesystem;
using namespace icgps;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitDataError = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool threads_set = false;
  bool force = false;
};

RunConfig load_with_overrides(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.threads_set) cfg.threads = opts.threads;
  if (cfg.threads == 0)
    cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cfg;
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = load_with_overrides(opts);
  const double bound = cfg.resolved_bound();
  const FlowShape shape = cfg.flow_shape();

  const std::string checkpoint_path = cfg.out_dir + "/checkpoint.json";
  const std::string report_path = cfg.out_dir + "/train_report.csv";
  const std::string echo_path = cfg.out_dir + "/config_resolved.json";
  ensure_writable(checkpoint_path, opts.force);
  ensure_writable(report_path, opts.force);
  ensure_writable(echo_path, opts.force);

  std::cout << "generating corpus: " << cfg.corpus_episodes << " episodes, horizon "
            << cfg.corpus_horizon << ", bound " << bound << "\n";
  const auto corpus = generate_corpus(cfg.prior, cfg.behavior, cfg.corpus_episodes,
                                      cfg.corpus_horizon, bound, derive_seed(cfg.seed, "corpus"));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  tc.threads = cfg.threads;
  auto [model, report] = train(corpus, shape, tc);

  save_checkpoint(checkpoint_path, model);
  CsvWriter rep(report_path, {"epoch", "train_nll", "val_nll", "best"});
  for (std::size_t e = 0; e < report.train_nll.size(); ++e)
    rep.row({std::to_string(e), fmt_double(report.train_nll[e]), fmt_double(report.val_nll[e]),
             static_cast<int>(e) == report.best_epoch ? "1" : "0"});
  write_resolved_config(echo_path, cfg);
  std::cout << "checkpoint: " << checkpoint_path << " (best epoch " << report.best_epoch
            << ", val NLL " << report.best_val_nll << ")\n";
  return kExitOk;
}

CompletionModel load_model_or_die(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw MissingArtifactError(path.empty() ? "<checkpoint>" : path);
  return load_checkpoint(path);
}

int cmd_run(const CommonOpts& opts) {
  RunConfig cfg = load_with_overrides(opts);
  if (!cfg.experiment) throw ConfigError("experiment", "missing required section for `run`");
  const auto& exp = *cfg.experiment;
  const double bound = cfg.resolved_bound();

  const std::string results_path = cfg.out_dir + "/results.csv";
  ensure_writable(results_path, opts.force);

  auto write_experiment = [&](const ExperimentResult& result) {
    write_results_csv(results_path, result.rows);
    for (double gamma : exp.gammas) {
      std::vector<ExperimentResult::Series> series;
      for (const auto& s : result.series)
        if (s.gamma == gamma) series.push_back(s);
      const std::string plot_path =
          cfg.out_dir + "/" + result.experiment + "_gamma" + fmt_double(gamma) + ".svg";
      ensure_writable(plot_path, opts.force);
      write_regret_svg(plot_path, result.experiment + " regret, gamma=" + fmt_double(gamma), series);
    }
    std::cout << "results: " << results_path << "\n";
  };

  if (exp.kind == "q1") {
    const CompletionModel model = load_model_or_die(exp.checkpoint);
    Q1Config qc;
    if (exp.task) qc.task = *exp.task;
    qc.gammas = exp.gammas;
    qc.horizon = exp.horizon;
    qc.trials = exp.trials;
    qc.h = cfg.cost_h;
    qc.bound = bound;
    qc.ts_prior = exp.ts_prior;
    qc.model = &model;
    qc.icgps = cfg.icgps;
    qc.seed = cfg.seed;
    qc.threads = cfg.threads;
    write_experiment(run_q1(qc));
    return kExitOk;
  }

  if (exp.kind == "q2-data" || exp.kind == "q2-capacity") {
    Q2Config qc;
    if (exp.task) qc.task = *exp.task;
    qc.train_prior = cfg.prior;
    qc.behavior = cfg.behavior;
    qc.corpus_sizes = exp.corpus_sizes;
    qc.hidden_widths = exp.hidden_widths;
    qc.capacity_corpus_size = exp.capacity_corpus_size;
    qc.corpus_horizon = cfg.corpus_horizon;
    qc.val_episodes = exp.val_episodes;
    qc.gammas = exp.gammas;
    qc.horizon = exp.horizon;
    qc.trials = exp.trials;
    qc.h = cfg.cost_h;
    qc.bound = bound;
    qc.flow_shape = cfg.flow_shape();
    qc.train_cfg = cfg.train;
    qc.train_cfg.threads = cfg.threads;
    qc.icgps = cfg.icgps;
    qc.seed = cfg.seed;
    qc.threads = cfg.threads;
    qc.run_capacity_sweep = exp.kind == "q2-capacity";
    if (exp.kind == "q2-data") qc.hidden_widths.clear();
    const Q2Result result = run_q2(qc);
    const std::string scatter_path = cfg.out_dir + "/q2_scatter.csv";
    ensure_writable(scatter_path, opts.force);
    CsvWriter scatter(scatter_path,
                      {"sweep", "sweep_value", "gamma", "delta_obs", "final_regret", "val_nll"});
    for (const auto& p : result.points)
      scatter.row({p.sweep, fmt_double(p.sweep_value), fmt_double(p.gamma),
                   fmt_double(p.delta_obs), fmt_double(p.final_regret), fmt_double(p.val_nll)});
    const std::string rho_path = cfg.out_dir + "/q2_spearman.csv";
    ensure_writable(rho_path, opts.force);
    CsvWriter rho(rho_path, {"sweep", "gamma", "spearman_rho"});
    for (const auto& [sweep, gamma, r] : result.spearman)
      rho.row({sweep, fmt_double(gamma), fmt_double(r)});
    std::cout << "results: " << scatter_path << "\n";
    return kExitOk;
  }

  if (exp.kind == "q3-shift" || exp.kind == "q3-prior") {
    const CompletionModel model = load_model_or_die(exp.checkpoint);
    Q3Config qc;
    qc.label = exp.kind;
    if (exp.task) qc.test_task = *exp.task;
    qc.ts_correct = exp.ts_correct ? *exp.ts_correct : exp.ts_prior;
    qc.ts_train = exp.ts_train_prior
                      ? *exp.ts_train_prior
                      : fit_weibull_prior_to_tasks(cfg.prior, 2000, derive_seed(cfg.seed, "fit"));
    qc.gammas = exp.gammas;
    qc.horizon = exp.horizon;
    qc.trials = exp.trials;
    qc.h = cfg.cost_h;
    qc.bound = bound;
    qc.model = &model;
    qc.icgps = cfg.icgps;
    qc.seed = cfg.seed;
    qc.threads = cfg.threads;
    write_experiment(run_q3(qc));
    return kExitOk;
  }

  if (exp.kind == "ingest-eval") {
    if (exp.store.empty() || !fs::exists(exp.store)) throw MissingArtifactError(exp.store);
    const auto episodes = read_corpus_csv(exp.store);
    const CostParams costs(cfg.cost_h, cfg.cost_b, bound);
    CompletionModel model;
    bool has_model = false;
    for (const auto& pname : exp.policies) {
      if (pname == "icgps") {
        model = load_model_or_die(exp.checkpoint);
        has_model = true;
      }
    }
    ICGPSConfig icgps = cfg.icgps;
    icgps.horizon = static_cast<int>(episodes.front().steps.size());
    PolicyFactory factory = [&](const CostParams& c) {
      std::vector<std::unique_ptr<Policy>> ps;
      for (const auto& pname : exp.policies) {
        if (pname == "icgps" && has_model)
          ps.push_back(std::make_unique<IcgpsPolicy>(&model, icgps, c));
        else if (pname == "km")
          ps.push_back(std::make_unique<KmPolicy>(c.gamma(), c.bound));
        else if (pname == "saa")
          ps.push_back(std::make_unique<SaaPolicy>(c.gamma(), c.bound));
        else if (pname == "ts-weibull")
          ps.push_back(std::make_unique<TsWeibullPolicy>(exp.ts_prior, c.gamma(), c.bound));
        else if (pname == "myopic-mle")
          ps.push_back(std::make_unique<MyopicMlePolicy>(exp.ts_prior.k, c.gamma(), c.bound));
        else
          throw ConfigError("experiment.policies", "unknown policy: " + pname);
      }
      return ps;
    };
    const auto table =
        evaluate_episodes(episodes, factory, costs, cfg.icgps.warmup, derive_seed(cfg.seed, "eval"));
    const std::string table_path = cfg.out_dir + "/cost_table.csv";
    ensure_writable(table_path, opts.force);
    CsvWriter w(table_path, {"policy", "group", "mean_cost", "episodes", "cost_is_lower_bound"});
    for (const auto& r : table)
      w.row({r.policy, r.group, fmt_double(r.mean_cost), std::to_string(r.episodes),
             r.lower_bound_flag ? "1" : "0"});
    std::cout << "results: " << table_path << "\n";
    return kExitOk;
  }

  throw ConfigError("experiment.kind", "unhandled kind " + exp.kind);
}

int cmd_ingest(const std::string& csv_path, const CommonOpts& opts) {
  const std::string out_dir = opts.out_dir.empty() ? "out" : opts.out_dir;
  if (!fs::exists(csv_path)) throw MissingArtifactError(csv_path);
  const auto episodes = read_corpus_csv(csv_path);
  const std::string store_path = out_dir + "/store.csv";
  ensure_writable(store_path, opts.force);
  write_corpus_csv(store_path, episodes);
  std::cout << "ingested " << episodes.size() << " episodes -> " << store_path << "\n";
  return kExitOk;
}

int cmd_check(const CommonOpts& opts) {
  const std::string out_dir = opts.out_dir.empty() ? "out" : opts.out_dir;
  const std::uint64_t seed = opts.seed_set ? opts.seed : 1;
  const auto results = run_all_checks(seed);
  const std::string diag_path = out_dir + "/diagnostics.csv";
  ensure_writable(diag_path, opts.force);
  write_diagnostics_csv(diag_path, results);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " statistic=" << fmt_double(r.statistic)
              << " threshold=" << fmt_double(r.threshold) << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "all checks passed\n" : "CHECK FAILURES PRESENT\n");
  return all_pass ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icgps_lab: censored-newsvendor simulation laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string ingest_csv;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) sub->add_option("--config,-c", opts.config_path, "config file")->required();
    sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opts.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { opts.seed_set = true; });
    sub->add_option("--threads", opts.threads, "worker threads (0 = hardware)")
        ->each([&](const std::string&) { opts.threads_set = true; });
    sub->add_flag("--force", opts.force, "overwrite existing outputs");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a completion model from a config");
  add_common(train_cmd, true);
  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment preset from a config");
  add_common(run_cmd, true);
  CLI::App* ingest_cmd = app.add_subcommand("ingest", "validate and normalize an episode CSV");
  ingest_cmd->add_option("--csv", ingest_csv, "episode CSV path")->required();
  add_common(ingest_cmd, false);
  CLI::App* check_cmd = app.add_subcommand("check", "run the invariant check suite");
  add_common(check_cmd, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(opts);
    if (run_cmd->parsed()) return cmd_run(opts);
    if (ingest_cmd->parsed()) return cmd_ingest(ingest_csv, opts);
    if (check_cmd->parsed()) return cmd_check(opts);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
  return kExitOk;
}
