#include "icgps/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "icgps/errors.hpp"

namespace icgps {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

double get_num(const json& obj, const std::string& path, const std::string& key, double fallback,
               bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError(path + "." + key, "missing required key");
    return fallback;
  }
  if (!obj[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
  return obj[key].get<double>();
}

ParamSpec parse_param_spec(const json& j, const std::string& path) {
  if (j.is_number()) return ParamSpec::fixed(j.get<double>());
  if (!j.is_object()) throw ConfigError(path, "expected number or {fixed|uniform|gamma}");
  reject_unknown(j, path, {"fixed", "uniform", "gamma"});
  if (j.contains("fixed")) return ParamSpec::fixed(j["fixed"].get<double>());
  if (j.contains("uniform")) {
    const auto v = j["uniform"].get<std::vector<double>>();
    if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError(path + ".uniform", "expected [lo, hi]");
    return ParamSpec::uniform(v[0], v[1]);
  }
  if (j.contains("gamma")) {
    const auto v = j["gamma"].get<std::vector<double>>();
    if (v.size() != 2 || !(v[0] > 0.0 && v[1] > 0.0))
      throw ConfigError(path + ".gamma", "expected [shape > 0, rate > 0]");
    return ParamSpec::gamma(v[0], v[1]);
  }
  throw ConfigError(path, "empty parameter spec");
}

TaskPrior parse_prior(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, path, {"families"});
  if (!j.contains("families") || !j["families"].is_array() || j["families"].empty())
    throw ConfigError(path + ".families", "expected a non-empty array");
  TaskPrior prior;
  int idx = 0;
  for (const auto& fam : j["families"]) {
    const std::string fpath = path + ".families[" + std::to_string(idx++) + "]";
    if (!fam.is_object()) throw ConfigError(fpath, "expected an object");
    reject_unknown(fam, fpath, {"family", "params"});
    if (!fam.contains("family")) throw ConfigError(fpath + ".family", "missing required key");
    FamilySpec spec;
    try {
      spec.family = family_from_name(fam["family"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fpath + ".family", e.what());
    }
    if (!fam.contains("params") || !fam["params"].is_array())
      throw ConfigError(fpath + ".params", "expected an array");
    int pidx = 0;
    for (const auto& p : fam["params"])
      spec.params.push_back(parse_param_spec(p, fpath + ".params[" + std::to_string(pidx++) + "]"));
    prior.families.push_back(std::move(spec));
  }
  return prior;
}

DemandModel parse_task(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, path, {"family", "params", "atoms", "probs"});
  if (!j.contains("family")) throw ConfigError(path + ".family", "missing required key");
  DemandModel m;
  try {
    m.family = family_from_name(j["family"].get<std::string>());
    if (m.family == DemandFamily::DiscreteFinite) {
      m = DemandModel::discrete(j.at("atoms").get<std::vector<double>>(),
                                j.at("probs").get<std::vector<double>>());
    } else {
      m.params = j.at("params").get<std::vector<double>>();
      validate(m);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  return m;
}

GammaPosterior parse_gamma_posterior(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object {a, b, k}");
  reject_unknown(j, path, {"a", "b", "k"});
  GammaPosterior g;
  g.a = get_num(j, path, "a", 0.0, true);
  g.b = get_num(j, path, "b", 0.0, true);
  g.k = get_num(j, path, "k", 0.0, true);
  if (!(g.a > 0.0 && g.b > 0.0 && g.k > 0.0)) throw ConfigError(path, "a, b, k must be positive");
  return g;
}

BehaviorPolicy parse_behavior(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, path, {"kind", "max_order_prob", "value"});
  const std::string kind = j.contains("kind") ? j["kind"].get<std::string>() : "uniform_mix";
  if (kind == "uniform_mix") {
    const double eta = get_num(j, path, "max_order_prob", 0.1);
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError(path + ".max_order_prob", "outside [0,1]");
    return BehaviorPolicy::uniform_mix(eta);
  }
  if (kind == "fixed_order") return BehaviorPolicy::fixed_order(get_num(j, path, "value", 0.0, true));
  if (kind == "task_quantile")
    return BehaviorPolicy::task_quantile(get_num(j, path, "value", 0.0, true));
  throw ConfigError(path + ".kind", "expected uniform_mix | fixed_order | task_quantile");
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("", "top level must be an object");
  reject_unknown(j, "", {"seed", "out_dir", "threads", "cost", "prior", "flow", "train", "icgps",
                         "experiment"});

  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();

  if (j.contains("cost")) {
    const auto& c = j["cost"];
    reject_unknown(c, "cost", {"h", "b", "bound"});
    cfg.cost_h = get_num(c, "cost", "h", cfg.cost_h);
    cfg.cost_b = get_num(c, "cost", "b", cfg.cost_b);
    cfg.bound = get_num(c, "cost", "bound", cfg.bound);
    if (!(cfg.cost_h > 0.0) || !(cfg.cost_b > 0.0)) throw ConfigError("cost", "h and b must be positive");
    if (cfg.bound < 0.0) throw ConfigError("cost.bound", "must be >= 0 (0 derives from prior)");
  }

  if (!j.contains("prior")) throw ConfigError("prior", "missing required section");
  cfg.prior = parse_prior(j["prior"], "prior");

  if (j.contains("flow")) {
    const auto& f = j["flow"];
    reject_unknown(f, "flow", {"bins", "latent_bound", "hidden"});
    cfg.flow_bins = static_cast<int>(get_num(f, "flow", "bins", cfg.flow_bins));
    if (cfg.flow_bins < 2) throw ConfigError("flow.bins", "must be >= 2");
    cfg.flow_latent_bound = get_num(f, "flow", "latent_bound", cfg.flow_latent_bound);
    if (!(cfg.flow_latent_bound > 0.0)) throw ConfigError("flow.latent_bound", "must be > 0");
    if (f.contains("hidden")) {
      cfg.hidden = f["hidden"].get<std::vector<int>>();
      for (int w : cfg.hidden)
        if (w < 1) throw ConfigError("flow.hidden", "layer widths must be positive");
    }
  }
  cfg.train.hidden = cfg.hidden;

  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train",
                   {"episodes", "horizon", "epochs", "batch_size", "learning_rate", "weight_decay",
                    "grad_clip", "val_fraction", "patience", "behavior"});
    cfg.corpus_episodes = static_cast<int>(get_num(t, "train", "episodes", cfg.corpus_episodes));
    cfg.corpus_horizon = static_cast<int>(get_num(t, "train", "horizon", cfg.corpus_horizon));
    cfg.train.epochs = static_cast<int>(get_num(t, "train", "epochs", cfg.train.epochs));
    cfg.train.batch_size = static_cast<int>(get_num(t, "train", "batch_size", cfg.train.batch_size));
    cfg.train.learning_rate = get_num(t, "train", "learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = get_num(t, "train", "weight_decay", cfg.train.weight_decay);
    cfg.train.grad_clip = get_num(t, "train", "grad_clip", cfg.train.grad_clip);
    cfg.train.val_fraction = get_num(t, "train", "val_fraction", cfg.train.val_fraction);
    cfg.train.patience = static_cast<int>(get_num(t, "train", "patience", cfg.train.patience));
    if (cfg.corpus_episodes < 1) throw ConfigError("train.episodes", "must be >= 1");
    if (cfg.corpus_horizon < 1) throw ConfigError("train.horizon", "must be >= 1");
    if (cfg.train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
    if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
    if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
    if (cfg.train.weight_decay < 0.0) throw ConfigError("train.weight_decay", "must be >= 0");
    if (!(cfg.train.val_fraction >= 0.0 && cfg.train.val_fraction < 1.0))
      throw ConfigError("train.val_fraction", "must lie in [0, 1)");
    if (t.contains("behavior")) cfg.behavior = parse_behavior(t["behavior"], "train.behavior");
  }

  if (j.contains("icgps")) {
    const auto& i = j["icgps"];
    reject_unknown(i, "icgps", {"rollouts", "warmup", "pseudo_future_in_km"});
    cfg.icgps.rollouts = static_cast<int>(get_num(i, "icgps", "rollouts", cfg.icgps.rollouts));
    cfg.icgps.warmup = static_cast<int>(get_num(i, "icgps", "warmup", cfg.icgps.warmup));
    if (cfg.icgps.rollouts < 1) throw ConfigError("icgps.rollouts", "must be >= 1");
    if (cfg.icgps.warmup < 0) throw ConfigError("icgps.warmup", "must be >= 0");
    if (i.contains("pseudo_future_in_km"))
      cfg.icgps.pseudo_future_in_km = i["pseudo_future_in_km"].get<bool>();
  }

  if (j.contains("experiment")) {
    const auto& e = j["experiment"];
    reject_unknown(e, "experiment",
                   {"kind", "horizon", "trials", "gammas", "checkpoint", "task", "ts_prior",
                    "ts_correct", "ts_train_prior", "corpus_sizes", "hidden_widths", "val_episodes",
                    "capacity_corpus_size", "store", "policies"});
    RunConfig::Experiment exp;
    if (!e.contains("kind")) throw ConfigError("experiment.kind", "missing required key");
    exp.kind = e["kind"].get<std::string>();
    const std::set<std::string> kinds = {"q1", "q2-data", "q2-capacity", "q3-shift", "q3-prior",
                                         "ingest-eval"};
    if (!kinds.count(exp.kind)) throw ConfigError("experiment.kind", "unknown experiment kind");
    exp.horizon = static_cast<int>(get_num(e, "experiment", "horizon", exp.horizon));
    exp.trials = static_cast<int>(get_num(e, "experiment", "trials", exp.trials));
    if (exp.horizon < 1) throw ConfigError("experiment.horizon", "must be >= 1");
    if (exp.trials < 2) throw ConfigError("experiment.trials", "must be >= 2");
    if (e.contains("gammas")) {
      exp.gammas = e["gammas"].get<std::vector<double>>();
      for (double g : exp.gammas)
        if (!(g > 0.0 && g < 1.0)) throw ConfigError("experiment.gammas", "entries must lie in (0,1)");
    }
    if (e.contains("checkpoint")) exp.checkpoint = e["checkpoint"].get<std::string>();
    if (e.contains("task")) exp.task = parse_task(e["task"], "experiment.task");
    if (e.contains("ts_prior")) exp.ts_prior = parse_gamma_posterior(e["ts_prior"], "experiment.ts_prior");
    if (e.contains("ts_correct"))
      exp.ts_correct = parse_gamma_posterior(e["ts_correct"], "experiment.ts_correct");
    if (e.contains("ts_train_prior"))
      exp.ts_train_prior = parse_gamma_posterior(e["ts_train_prior"], "experiment.ts_train_prior");
    if (e.contains("corpus_sizes")) exp.corpus_sizes = e["corpus_sizes"].get<std::vector<int>>();
    if (e.contains("hidden_widths")) exp.hidden_widths = e["hidden_widths"].get<std::vector<int>>();
    exp.val_episodes = static_cast<int>(get_num(e, "experiment", "val_episodes", exp.val_episodes));
    exp.capacity_corpus_size =
        static_cast<int>(get_num(e, "experiment", "capacity_corpus_size", exp.capacity_corpus_size));
    if (e.contains("store")) exp.store = e["store"].get<std::string>();
    if (e.contains("policies")) exp.policies = e["policies"].get<std::vector<std::string>>();
    cfg.experiment = std::move(exp);
  }

  if (cfg.threads < 0) throw ConfigError("threads", "must be >= 0");
  return cfg;
}

void write_resolved_config(const std::string& path, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["threads"] = cfg.threads;
  j["cost"] = {{"h", cfg.cost_h}, {"b", cfg.cost_b}, {"bound", cfg.resolved_bound()}};
  nlohmann::ordered_json families = nlohmann::ordered_json::array();
  for (const auto& spec : cfg.prior.families) {
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (const auto& p : spec.params) {
      switch (p.kind) {
        case ParamSpec::Kind::Fixed: params.push_back({{"fixed", p.a}}); break;
        case ParamSpec::Kind::Uniform: params.push_back({{"uniform", {p.a, p.b}}}); break;
        case ParamSpec::Kind::Gamma: params.push_back({{"gamma", {p.a, p.b}}}); break;
      }
    }
    families.push_back({{"family", family_name(spec.family)}, {"params", params}});
  }
  j["prior"] = {{"families", families}};
  j["flow"] = {{"bins", cfg.flow_bins}, {"latent_bound", cfg.flow_latent_bound}, {"hidden", cfg.hidden}};
  nlohmann::ordered_json behavior;
  switch (cfg.behavior.kind) {
    case BehaviorPolicy::Kind::UniformMix:
      behavior = {{"kind", "uniform_mix"}, {"max_order_prob", cfg.behavior.max_order_prob}};
      break;
    case BehaviorPolicy::Kind::FixedOrder:
      behavior = {{"kind", "fixed_order"}, {"value", cfg.behavior.value}};
      break;
    case BehaviorPolicy::Kind::TaskQuantile:
      behavior = {{"kind", "task_quantile"}, {"value", cfg.behavior.value}};
      break;
  }
  j["train"] = {{"episodes", cfg.corpus_episodes},
                {"horizon", cfg.corpus_horizon},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"weight_decay", cfg.train.weight_decay},
                {"grad_clip", cfg.train.grad_clip},
                {"val_fraction", cfg.train.val_fraction},
                {"patience", cfg.train.patience},
                {"behavior", behavior}};
  j["icgps"] = {{"rollouts", cfg.icgps.rollouts},
                {"warmup", cfg.icgps.warmup},
                {"pseudo_future_in_km", cfg.icgps.pseudo_future_in_km}};
  if (cfg.experiment) {
    const auto& e = *cfg.experiment;
    nlohmann::ordered_json je;
    je["kind"] = e.kind;
    je["horizon"] = e.horizon;
    je["trials"] = e.trials;
    je["gammas"] = e.gammas;
    if (!e.checkpoint.empty()) je["checkpoint"] = e.checkpoint;
    if (e.task) {
      if (e.task->family == DemandFamily::DiscreteFinite)
        je["task"] = {{"family", "discrete"}, {"atoms", e.task->atoms}, {"probs", e.task->probs}};
      else
        je["task"] = {{"family", family_name(e.task->family)}, {"params", e.task->params}};
    }
    je["ts_prior"] = {{"a", e.ts_prior.a}, {"b", e.ts_prior.b}, {"k", e.ts_prior.k}};
    if (e.ts_correct)
      je["ts_correct"] = {{"a", e.ts_correct->a}, {"b", e.ts_correct->b}, {"k", e.ts_correct->k}};
    if (e.ts_train_prior)
      je["ts_train_prior"] = {{"a", e.ts_train_prior->a}, {"b", e.ts_train_prior->b}, {"k", e.ts_train_prior->k}};
    je["corpus_sizes"] = e.corpus_sizes;
    je["hidden_widths"] = e.hidden_widths;
    je["val_episodes"] = e.val_episodes;
    je["capacity_corpus_size"] = e.capacity_corpus_size;
    if (!e.store.empty()) je["store"] = e.store;
    je["policies"] = e.policies;
    j["experiment"] = je;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write resolved config: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace icgps
