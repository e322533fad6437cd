#pragma once

#include <cmath>

#include "icgps/diagnostics.hpp"
#include "icgps/flow.hpp"
#include "icgps/math.hpp"
#include "icgps/survival.hpp"

namespace icgps::test_util {

// Zero-weight model whose bias-driven transform approximates T(z) = B*Phi(z),
// i.e. the flow mimics Unif[0, B] regardless of context. More bins give a
// closer piecewise-linear fit.
inline CompletionModel uniform_mimic_model(double bound, int bins = 64, double latent = 5.0) {
  CompletionModel model;
  model.shape = FlowShape{bins, latent, bound};
  Rng rng = make_rng(0, "uniform-mimic");
  model.net = HyperNetwork::init(kContextDim, {8}, model.shape, rng);
  for (auto& W : model.net.weights) W.setZero();
  for (auto& b : model.net.biases) b.setZero();
  Eigen::VectorXd& out = model.net.biases.back();
  const double z0 = model.shape.knot(0);
  out(0) = bound * normal_cdf(z0);
  for (int i = 1; i <= bins; ++i) {
    const double inc = bound * (normal_cdf(model.shape.knot(i)) - normal_cdf(model.shape.knot(i - 1)));
    out(i) = softplus_inv(std::max(inc - kEpsWidth, 1e-9));
  }
  const double tail = std::max(bound * normal_pdf(latent), 1e-9);
  out(bins + 1) = softplus_inv(tail);
  out(bins + 2) = softplus_inv(tail);
  return model;
}

// Zero-weight model concentrating essentially all mass in a narrow band
// around d0 (a near point mass).
inline CompletionModel point_mass_mimic_model(double bound, double d0, double width = 1e-3) {
  CompletionModel model;
  model.shape = FlowShape{8, 4.0, bound};
  Rng rng = make_rng(0, "pm-mimic");
  model.net = HyperNetwork::init(kContextDim, {8}, model.shape, rng);
  for (auto& W : model.net.weights) W.setZero();
  for (auto& b : model.net.biases) b.setZero();
  Eigen::VectorXd& out = model.net.biases.back();
  out(0) = d0 - 0.5 * width * model.shape.bins;
  for (int i = 1; i <= model.shape.bins; ++i)
    out(i) = softplus_inv(std::max(width - kEpsWidth, 1e-9));
  out(model.shape.bins + 1) = softplus_inv(1e-4);
  out(model.shape.bins + 2) = softplus_inv(1e-4);
  return model;
}

}  // namespace icgps::test_util
