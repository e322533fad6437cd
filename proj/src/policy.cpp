#include "icgps/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <stdexcept>

#include "icgps/math.hpp"

namespace icgps {

Completion complete_trajectory(const CompletionModel& model, const History& history, int t, int T,
                               Rng& rng, bool pseudo_future_in_km) {
  if (static_cast<int>(history.size()) != t - 1)
    throw std::invalid_argument("complete_trajectory: history length must be t-1");
  if (t < 1 || t > T + 1) throw std::invalid_argument("complete_trajectory: t outside [1, T+1]");
  const double B = model.shape.demand_bound;

  Completion out;
  out.demands.resize(T);

  ContextBuilder builder(B);
  builder.reserve(static_cast<std::size_t>(T));
  for (const auto& step : history.steps) builder.push(step.order, step.obs.sales, step.obs.censored);

  thread_local FlowWorkspace ws;
  thread_local ContextVector ctx;

  for (int s = 1; s <= T; ++s) {
    const std::size_t idx = static_cast<std::size_t>(s - 1);
    if (s < t) {
      const HistoryStep& step = history.steps[idx];
      if (!step.obs.censored) {
        out.demands(s - 1) = step.obs.sales;  // revealed demand
        continue;
      }
      builder.encode(ctx);
      const auto d = tail_sample(model, ctx, step.order, rng, ws);
      double demand;
      if (d) {
        demand = *d;
      } else {
        // Tail mass exhausted: fall back to a uniform draw on (order, B].
        demand = step.order + (B - step.order) * uniform_open01(rng);
        ++out.tail_fallbacks;
      }
      assert(demand > step.order);
      out.demands(s - 1) = demand;
      builder.replace_with_event(idx, demand);
    } else {
      if (pseudo_future_in_km)
        builder.encode(ctx);
      else
        builder.encode_prefix(static_cast<std::size_t>(t - 1), ctx);
      const double demand = flow_quantile(model, ctx, uniform_open01(rng), ws);
      out.demands(s - 1) = demand;
      builder.push(B, demand, false);
    }
  }
  return out;
}

double oracle_quantile(const Eigen::VectorXd& demands, double gamma) {
  const long n = demands.size();
  if (n == 0) throw std::invalid_argument("oracle_quantile: empty completion");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("oracle_quantile: gamma outside (0,1)");
  long m = static_cast<long>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
  m = std::clamp<long>(m, 1, n);
  thread_local std::vector<double> scratch;
  scratch.assign(demands.data(), demands.data() + n);
  std::nth_element(scratch.begin(), scratch.begin() + (m - 1), scratch.end());
  return scratch[static_cast<std::size_t>(m - 1)];
}

double oracle_quantile(std::vector<double> demands, double gamma) {
  Eigen::Map<const Eigen::VectorXd> v(demands.data(), static_cast<long>(demands.size()));
  return oracle_quantile(Eigen::VectorXd(v), gamma);
}

double IcgpsPolicy::act(const History& history, Rng& rng) {
  const int t = static_cast<int>(history.size()) + 1;
  if (t <= config_.warmup) return costs_.bound;
  const int M = std::max(1, config_.rollouts);
  actions_.clear();
  actions_.reserve(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    Completion c = complete_trajectory(*model_, history, t, config_.horizon, rng,
                                       config_.pseudo_future_in_km);
    tail_fallbacks_ += c.tail_fallbacks;
    actions_.push_back(oracle_quantile(c.demands, costs_.gamma()));
  }
  std::sort(actions_.begin(), actions_.end());
  // Lower-middle median keeps the action inside the set of rollout oracles.
  return actions_[static_cast<std::size_t>((M - 1) / 2)];
}

double ActionLaw::prob_of(double a) const {
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i] == a) return probs[i];
  return 0.0;
}

namespace {

double discrete_mass_above(const DemandModel& task, double x) {
  double p = 0.0;
  for (std::size_t i = 0; i < task.atoms.size(); ++i)
    if (task.atoms[i] > x) p += task.probs[i];
  return p;
}

double discrete_pmf(const DemandModel& task, double v) {
  for (std::size_t i = 0; i < task.atoms.size(); ++i)
    if (task.atoms[i] == v) return task.probs[i];
  return 0.0;
}

DemandModel as_discrete(const DemandModel& task) {
  if (task.family == DemandFamily::DiscreteFinite) return task;
  if (task.family == DemandFamily::PointMass)
    return DemandModel::discrete({task.params[0]}, {1.0});
  throw std::invalid_argument("exact GPS oracle requires finite-support tasks");
}

}  // namespace

std::vector<double> discrete_posterior(const std::vector<DemandModel>& tasks,
                                       const std::vector<double>& prior_weights,
                                       const History& history) {
  if (tasks.empty() || tasks.size() != prior_weights.size())
    throw std::invalid_argument("discrete_posterior: tasks/weights mismatch");
  std::vector<double> w(prior_weights);
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const DemandModel task = as_discrete(tasks[k]);
    for (const auto& step : history.steps) {
      const double like = step.obs.censored ? discrete_mass_above(task, step.order)
                                            : discrete_pmf(task, step.obs.sales);
      w[k] *= like;
    }
  }
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0))
    throw std::invalid_argument("discrete_posterior: history has zero likelihood under all tasks");
  for (double& v : w) v /= total;
  return w;
}

ActionLaw exact_gps_discrete(const std::vector<DemandModel>& tasks,
                             const std::vector<double>& prior_weights, const History& history,
                             double gamma, int T) {
  const int t = static_cast<int>(history.size()) + 1;
  if (t > T + 1) throw std::invalid_argument("exact_gps_discrete: history longer than horizon");
  const std::vector<double> posterior = discrete_posterior(tasks, prior_weights, history);

  std::map<double, double> law;
  std::vector<double> completion(static_cast<std::size_t>(T));

  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (posterior[k] == 0.0) continue;
    const DemandModel task = as_discrete(tasks[k]);

    // Per-slot candidate sets: fixed singletons for revealed slots, the
    // conditional tail support for censored slots, the full support for
    // future slots.
    struct Slot {
      std::vector<double> values;
      std::vector<double> probs;
    };
    std::vector<Slot> free_slots;
    std::vector<int> free_pos;
    double combos = 1.0;
    for (int s = 1; s <= T; ++s) {
      if (s < t) {
        const HistoryStep& step = history.steps[static_cast<std::size_t>(s - 1)];
        if (!step.obs.censored) {
          completion[static_cast<std::size_t>(s - 1)] = step.obs.sales;
          continue;
        }
        Slot slot;
        const double tail = discrete_mass_above(task, step.order);
        for (std::size_t i = 0; i < task.atoms.size(); ++i)
          if (task.atoms[i] > step.order) {
            slot.values.push_back(task.atoms[i]);
            slot.probs.push_back(task.probs[i] / tail);
          }
        combos *= static_cast<double>(slot.values.size());
        free_slots.push_back(std::move(slot));
        free_pos.push_back(s - 1);
      } else {
        Slot slot{task.atoms, task.probs};
        combos *= static_cast<double>(slot.values.size());
        free_slots.push_back(std::move(slot));
        free_pos.push_back(s - 1);
      }
    }
    if (combos > 1e6)
      throw std::invalid_argument("exact_gps_discrete: enumeration exceeds 1e6 combinations");

    std::vector<std::size_t> odo(free_slots.size(), 0);
    for (;;) {
      double p = posterior[k];
      for (std::size_t j = 0; j < free_slots.size(); ++j) {
        completion[static_cast<std::size_t>(free_pos[j])] = free_slots[j].values[odo[j]];
        p *= free_slots[j].probs[odo[j]];
      }
      law[oracle_quantile(completion, gamma)] += p;
      // advance odometer
      std::size_t j = 0;
      for (; j < odo.size(); ++j) {
        if (++odo[j] < free_slots[j].values.size()) break;
        odo[j] = 0;
      }
      if (j == odo.size()) break;
    }
  }

  ActionLaw out;
  for (const auto& [a, p] : law) {
    out.actions.push_back(a);
    out.probs.push_back(p);
  }
  return out;
}

std::vector<double> sample_true_kernel_completion(const std::vector<DemandModel>& tasks,
                                                  const std::vector<double>& prior_weights,
                                                  const History& history, int T, Rng& rng) {
  const int t = static_cast<int>(history.size()) + 1;
  const std::vector<double> posterior = discrete_posterior(tasks, prior_weights, history);
  // Categorical draw over tasks.
  double u = uniform01(rng);
  std::size_t k = 0;
  for (; k + 1 < posterior.size(); ++k) {
    if (u < posterior[k]) break;
    u -= posterior[k];
  }
  const DemandModel task = as_discrete(tasks[k]);

  std::vector<double> completion(static_cast<std::size_t>(T));
  auto draw = [&](double above) {
    double mass = 0.0;
    for (std::size_t i = 0; i < task.atoms.size(); ++i)
      if (task.atoms[i] > above) mass += task.probs[i];
    double v = uniform01(rng) * mass;
    for (std::size_t i = 0; i < task.atoms.size(); ++i) {
      if (task.atoms[i] <= above) continue;
      if (v < task.probs[i]) return task.atoms[i];
      v -= task.probs[i];
    }
    for (std::size_t i = task.atoms.size(); i-- > 0;)
      if (task.atoms[i] > above) return task.atoms[i];
    throw std::logic_error("sample_true_kernel_completion: empty tail support");
  };
  for (int s = 1; s <= T; ++s) {
    if (s < t) {
      const HistoryStep& step = history.steps[static_cast<std::size_t>(s - 1)];
      completion[static_cast<std::size_t>(s - 1)] =
          step.obs.censored ? draw(step.order) : step.obs.sales;
    } else {
      completion[static_cast<std::size_t>(s - 1)] = draw(-1.0);
    }
  }
  return completion;
}

double total_variation(const ActionLaw& a, const ActionLaw& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.actions.size(); ++i)
    tv += std::abs(a.probs[i] - b.prob_of(a.actions[i]));
  for (std::size_t i = 0; i < b.actions.size(); ++i)
    if (a.prob_of(b.actions[i]) == 0.0) tv += b.probs[i];
  return 0.5 * tv;
}

}  // namespace icgps
