#pragma once

#include "icgps/policy.hpp"
#include "icgps/survival.hpp"

namespace icgps {

// Conjugate posterior for the Weibull rate under a Gamma(a, b) prior with
// known shape k: uncensored demand d contributes (a+1, b+d^k), a censored
// observation at order x contributes (a, b+x^k).
struct GammaPosterior {
  double a = 1.0;  // shape
  double b = 1.0;  // rate
  double k = 1.0;  // known Weibull shape
};

GammaPosterior gamma_update(GammaPosterior post, double order, const CensoredObs& obs);

double ts_weibull_act(const GammaPosterior& post, double gamma, double bound, Rng& rng);

// Plug-in MLE using uncensored observations only; orders B with no data.
double myopic_mle_act(const History& history, double k, double gamma, double bound);

// Optimistic rate estimate: the `conf` posterior quantile of
// Gamma(n_uncensored, sum sales^k); lower rate means heavier demand.
double ucb_act(const History& history, double k, double gamma, double bound, double conf = 0.05);

// Left empirical gamma-quantile of raw sales, censoring ignored.
double saa_act(const History& history, double gamma, double bound);
// KM plug-in quantile.
double km_act(const History& history, double gamma, double bound);

class TsWeibullPolicy final : public Policy {
 public:
  TsWeibullPolicy(GammaPosterior prior, double gamma, double bound, std::string label = "ts-weibull")
      : prior_(prior), gamma_(gamma), bound_(bound), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  double act(const History& history, Rng& rng) override {
    GammaPosterior post = prior_;
    for (const auto& s : history.steps) post = gamma_update(post, s.order, s.obs);
    return ts_weibull_act(post, gamma_, bound_, rng);
  }

 private:
  GammaPosterior prior_;
  double gamma_, bound_;
  std::string label_;
};

class MyopicMlePolicy final : public Policy {
 public:
  MyopicMlePolicy(double k, double gamma, double bound) : k_(k), gamma_(gamma), bound_(bound) {}
  std::string name() const override { return "myopic-mle"; }
  double act(const History& history, Rng&) override {
    return myopic_mle_act(history, k_, gamma_, bound_);
  }

 private:
  double k_, gamma_, bound_;
};

class UcbPolicy final : public Policy {
 public:
  UcbPolicy(double k, double gamma, double bound, double conf = 0.05)
      : k_(k), gamma_(gamma), bound_(bound), conf_(conf) {}
  std::string name() const override { return "ucb"; }
  double act(const History& history, Rng&) override {
    return ucb_act(history, k_, gamma_, bound_, conf_);
  }

 private:
  double k_, gamma_, bound_, conf_;
};

class SaaPolicy final : public Policy {
 public:
  SaaPolicy(double gamma, double bound) : gamma_(gamma), bound_(bound) {}
  std::string name() const override { return "saa"; }
  double act(const History& history, Rng&) override { return saa_act(history, gamma_, bound_); }

 private:
  double gamma_, bound_;
};

class KmPolicy final : public Policy {
 public:
  KmPolicy(double gamma, double bound) : gamma_(gamma), bound_(bound) {}
  std::string name() const override { return "km"; }
  double act(const History& history, Rng&) override { return km_act(history, gamma_, bound_); }

 private:
  double gamma_, bound_;
};

class FixedOrderPolicy final : public Policy {
 public:
  FixedOrderPolicy(double order, std::string label = "fixed") : order_(order), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  double act(const History&, Rng&) override { return order_; }

 private:
  double order_;
  std::string label_;
};

}  // namespace icgps
