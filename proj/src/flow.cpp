#include "icgps/flow.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "icgps/math.hpp"

namespace icgps {

namespace {
std::atomic<bool> g_grad_sign_flip{false};
}

namespace testing {
void force_gradient_sign_flip(bool on) { g_grad_sign_flip.store(on); }
}  // namespace testing

std::size_t HyperNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
  return n;
}

HyperNetwork HyperNetwork::init(int input_dim, const std::vector<int>& hidden,
                                const FlowShape& shape, Rng& rng) {
  if (shape.bins < 2) throw std::invalid_argument("FlowShape: need at least 2 bins");
  if (!(shape.latent_bound > 0.0)) throw std::invalid_argument("FlowShape: latent_bound <= 0");
  HyperNetwork net;
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(shape.raw_dim());
  const std::size_t n_layers = dims.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    if (l + 1 == n_layers) limit *= 0.01;  // keep the default flow close to its bias shape
    Eigen::MatrixXd W(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) W(r, c) = uniform_in(rng, -limit, limit);
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  // Bias the raw head so the default transform spans [0.05B, 0.95B] with
  // equal increments and tail slopes matching the interior average.
  const double B = shape.demand_bound;
  const int K = shape.bins;
  Eigen::VectorXd& b_out = net.biases.back();
  b_out(0) = 0.05 * B;
  const double step = std::max(0.9 * B / K - kEpsWidth, 1e-6);
  for (int i = 1; i <= K; ++i) b_out(i) = softplus_inv(step);
  const double tail = std::max(0.9 * B / (2.0 * shape.latent_bound) - kEpsWidth, 1e-6);
  b_out(K + 1) = softplus_inv(tail);
  b_out(K + 2) = softplus_inv(tail);
  net.norm_mean = Eigen::VectorXd::Zero(input_dim);
  net.norm_std = Eigen::VectorXd::Ones(input_dim);
  return net;
}

NetGrad NetGrad::zeros_like(const HyperNetwork& net) {
  NetGrad g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

void NetGrad::set_zero() {
  for (auto& W : weights) W.setZero();
  for (auto& b : biases) b.setZero();
}

void NetGrad::add_scaled(const NetGrad& other, double c) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += c * other.weights[l];
    biases[l] += c * other.biases[l];
  }
}

double NetGrad::squared_norm() const {
  double s = 0.0;
  for (const auto& W : weights) s += W.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

void NetGrad::scale(double c) {
  for (auto& W : weights) W *= c;
  for (auto& b : biases) b *= c;
}

namespace {

void ensure_workspace(const CompletionModel& model, FlowWorkspace& ws) {
  const std::size_t n_layers = model.net.layer_count();
  if (ws.activations.size() != n_layers + 1) {
    ws.activations.assign(n_layers + 1, Eigen::VectorXd());
    ws.grad_act.assign(n_layers + 1, Eigen::VectorXd());
  }
}

void mlp_forward(const CompletionModel& model, const Eigen::VectorXd& ctx, FlowWorkspace& ws) {
  const HyperNetwork& net = model.net;
  if (ctx.size() != net.input_dim())
    throw std::invalid_argument("hyper_forward: context dimension mismatch");
  ensure_workspace(model, ws);
  ws.activations[0] = (ctx - net.norm_mean).cwiseQuotient(net.norm_std);
  const std::size_t n_layers = net.layer_count();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::VectorXd& out = ws.activations[l + 1];
    out.noalias() = net.weights[l] * ws.activations[l];
    out += net.biases[l];
    if (l + 1 < n_layers) out = out.array().tanh();
  }
  ws.raw = ws.activations[n_layers];
}

void raw_to_params(const FlowShape& shape, const Eigen::VectorXd& raw, FlowParams& p) {
  const int K = shape.bins;
  if (p.heights.size() != K + 1) p.heights.resize(K + 1);
  p.heights(0) = raw(0);
  for (int i = 1; i <= K; ++i) p.heights(i) = p.heights(i - 1) + softplus(raw(i)) + kEpsWidth;
  p.slope_left = softplus(raw(K + 1)) + kEpsWidth;
  p.slope_right = softplus(raw(K + 2)) + kEpsWidth;
}

// Segment index for a demand value: -1 left tail, K right tail, else bin i.
int locate_segment(const FlowParams& p, int K, double d) {
  if (d < p.heights(0)) return -1;
  if (d >= p.heights(K)) return K;
  int lo = 0, hi = K;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (p.heights(mid) <= d)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

void hyper_forward(const CompletionModel& model, const Eigen::VectorXd& ctx, FlowWorkspace& ws) {
  mlp_forward(model, ctx, ws);
  raw_to_params(model.shape, ws.raw, ws.params);
}

FlowParams hyper_forward(const CompletionModel& model, const Eigen::VectorXd& ctx) {
  FlowWorkspace ws;
  hyper_forward(model, ctx, ws);
  return ws.params;
}

double flow_transform(const FlowShape& shape, const FlowParams& p, double z) {
  const int K = shape.bins;
  const double L = shape.latent_bound;
  if (z < -L) return p.heights(0) + p.slope_left * (z + L);
  if (z >= L) return p.heights(K) + p.slope_right * (z - L);
  const double dz = shape.dz();
  int i = static_cast<int>((z + L) / dz);
  if (i >= K) i = K - 1;
  const double m = (p.heights(i + 1) - p.heights(i)) / dz;
  return p.heights(i) + m * (z - shape.knot(i));
}

double flow_transform_inv(const FlowShape& shape, const FlowParams& p, double d) {
  const int K = shape.bins;
  const double L = shape.latent_bound;
  const int seg = locate_segment(p, K, d);
  if (seg < 0) return -L + (d - p.heights(0)) / p.slope_left;
  if (seg >= K) return L + (d - p.heights(K)) / p.slope_right;
  const double w = p.heights(seg + 1) - p.heights(seg);
  return shape.knot(seg) + shape.dz() * (d - p.heights(seg)) / w;
}

namespace {

double cdf_at(const CompletionModel& model, const FlowParams& p, double d) {
  return normal_cdf(flow_transform_inv(model.shape, p, d));
}

double survival_at(const CompletionModel& model, const FlowParams& p, double d) {
  return normal_sf(flow_transform_inv(model.shape, p, d));
}

double log_density_at(const CompletionModel& model, const FlowParams& p, double d) {
  const FlowShape& shape = model.shape;
  const int K = shape.bins;
  const double z = flow_transform_inv(shape, p, d);
  const int seg = locate_segment(p, K, d);
  double slope;
  if (seg < 0)
    slope = p.slope_left;
  else if (seg >= K)
    slope = p.slope_right;
  else
    slope = (p.heights(seg + 1) - p.heights(seg)) / shape.dz();
  return normal_log_pdf(z) - std::log(slope);
}

}  // namespace

double flow_cdf(const CompletionModel& model, const Eigen::VectorXd& ctx, double d) {
  FlowWorkspace ws;
  hyper_forward(model, ctx, ws);
  return cdf_at(model, ws.params, d);
}

double flow_survival(const CompletionModel& model, const Eigen::VectorXd& ctx, double d) {
  FlowWorkspace ws;
  hyper_forward(model, ctx, ws);
  return survival_at(model, ws.params, d);
}

double flow_quantile(const CompletionModel& model, const Eigen::VectorXd& ctx, double u,
                     FlowWorkspace& ws) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("flow_quantile: u outside (0,1)");
  hyper_forward(model, ctx, ws);
  const double d = flow_transform(model.shape, ws.params, normal_quantile(u));
  return std::clamp(d, 0.0, model.shape.demand_bound);
}

double flow_quantile(const CompletionModel& model, const Eigen::VectorXd& ctx, double u) {
  FlowWorkspace ws;
  return flow_quantile(model, ctx, u, ws);
}

double flow_log_density(const CompletionModel& model, const Eigen::VectorXd& ctx, double d) {
  FlowWorkspace ws;
  hyper_forward(model, ctx, ws);
  return log_density_at(model, ws.params, d);
}

std::optional<double> tail_sample(const CompletionModel& model, const Eigen::VectorXd& ctx,
                                  double threshold, Rng& rng, FlowWorkspace& ws) {
  const double B = model.shape.demand_bound;
  if (!(threshold >= 0.0 && threshold < B))
    throw std::invalid_argument("tail_sample: threshold outside [0, B)");
  hyper_forward(model, ctx, ws);
  const double surv = survival_at(model, ws.params, threshold);
  if (surv < kEpsSurvival) return std::nullopt;
  // U ~ Unif(F(x), 1) via the survival scale: 1-U ~ Unif(0, surv), which
  // stays accurate when surv is tiny.
  const double s_target = surv * uniform_open01(rng);
  const double z = -normal_quantile(s_target);
  double d = flow_transform(model.shape, ws.params, z);
  d = std::min(d, B);
  if (d <= threshold) d = std::nextafter(threshold, B);
  return d;
}

std::optional<double> tail_sample(const CompletionModel& model, const Eigen::VectorXd& ctx,
                                  double threshold, Rng& rng) {
  FlowWorkspace ws;
  return tail_sample(model, ctx, threshold, rng, ws);
}

double censored_nll(const CompletionModel& model, const Eigen::VectorXd& ctx, double order,
                    const CensoredObs& obs) {
  FlowWorkspace ws;
  hyper_forward(model, ctx, ws);
  if (obs.censored) {
    if (obs.sales != order)
      throw std::invalid_argument("censored_nll: censored observation with sales != order");
    const double surv = survival_at(model, ws.params, order);
    return -std::log(std::max(surv, kEpsSurvival));
  }
  return -log_density_at(model, ws.params, obs.sales);
}

double censored_nll_grad(const CompletionModel& model, const Eigen::VectorXd& ctx, double order,
                         const CensoredObs& obs, NetGrad& grad, FlowWorkspace& ws, double weight) {
  const FlowShape& shape = model.shape;
  const HyperNetwork& net = model.net;
  const int K = shape.bins;
  const double L = shape.latent_bound;
  const double dz = shape.dz();

  hyper_forward(model, ctx, ws);
  const FlowParams& p = ws.params;

  if (ws.grad_raw.size() != shape.raw_dim()) ws.grad_raw.resize(shape.raw_dim());
  ws.grad_raw.setZero();
  // Gradients w.r.t. heights live in grad_raw(0..K) until the chain through
  // the cumulative-softplus construction below; tail slopes in K+1, K+2.
  double nll;
  const double value = obs.censored ? order : obs.sales;
  const double z = flow_transform_inv(shape, p, value);
  const int seg = locate_segment(p, K, value);

  double dnll_dz;
  bool clamped = false;
  if (obs.censored) {
    if (obs.sales != order)
      throw std::invalid_argument("censored_nll_grad: censored observation with sales != order");
    const double surv = normal_sf(z);
    if (surv <= kEpsSurvival) {
      nll = -std::log(kEpsSurvival);
      clamped = true;
      dnll_dz = 0.0;
    } else {
      nll = -std::log(surv);
      dnll_dz = normal_pdf(z) / surv;  // hazard of the latent normal
    }
  } else {
    double slope;
    if (seg < 0)
      slope = p.slope_left;
    else if (seg >= K)
      slope = p.slope_right;
    else
      slope = (p.heights(seg + 1) - p.heights(seg)) / dz;
    nll = -(normal_log_pdf(z) - std::log(slope));
    dnll_dz = z;
  }

  if (!clamped) {
    if (seg < 0) {
      const double sL = p.slope_left;
      ws.grad_raw(0) += dnll_dz * (-1.0 / sL);
      ws.grad_raw(K + 1) += dnll_dz * (-(z + L) / sL);
      if (!obs.censored) ws.grad_raw(K + 1) += 1.0 / sL;  // d log slope
    } else if (seg >= K) {
      const double sR = p.slope_right;
      ws.grad_raw(K) += dnll_dz * (-1.0 / sR);
      ws.grad_raw(K + 2) += dnll_dz * (-(z - L) / sR);
      if (!obs.censored) ws.grad_raw(K + 2) += 1.0 / sR;
    } else {
      const double w = p.heights(seg + 1) - p.heights(seg);
      const double lo = p.heights(seg), hi = p.heights(seg + 1);
      ws.grad_raw(seg) += dnll_dz * dz * (value - hi) / (w * w);
      ws.grad_raw(seg + 1) += dnll_dz * dz * -(value - lo) / (w * w);
      if (!obs.censored) {
        ws.grad_raw(seg) += -1.0 / w;
        ws.grad_raw(seg + 1) += 1.0 / w;
      }
    }
    // Heights -> raw outputs: h_0 = r_0, h_i = h_{i-1} + softplus(r_i) + eps.
    double suffix = 0.0;
    for (int i = K; i >= 1; --i) {
      suffix += ws.grad_raw(i);
      ws.grad_raw(i) = suffix * softplus_deriv(ws.raw(i));
    }
    ws.grad_raw(0) += suffix;
    ws.grad_raw(K + 1) *= softplus_deriv(ws.raw(K + 1));
    ws.grad_raw(K + 2) *= softplus_deriv(ws.raw(K + 2));
  }

  if (g_grad_sign_flip.load(std::memory_order_relaxed)) ws.grad_raw = -ws.grad_raw;

  // Backprop through the MLP.
  const std::size_t n_layers = net.layer_count();
  ws.grad_act[n_layers] = ws.grad_raw;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::VectorXd& delta = ws.grad_act[l + 1];
    grad.weights[l].noalias() += weight * delta * ws.activations[l].transpose();
    grad.biases[l] += weight * delta;
    if (l > 0) {
      Eigen::VectorXd& down = ws.grad_act[l];
      down.noalias() = net.weights[l].transpose() * delta;
      down.array() *= 1.0 - ws.activations[l].array().square();
    }
  }
  return nll;
}

void save_checkpoint(const std::string& path, const CompletionModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["shape"] = {{"bins", model.shape.bins},
                {"latent_bound", model.shape.latent_bound},
                {"demand_bound", model.shape.demand_bound}};
  nlohmann::ordered_json net;
  net["input_dim"] = model.net.input_dim();
  std::vector<int> widths;
  for (std::size_t l = 0; l + 1 < model.net.layer_count(); ++l)
    widths.push_back(static_cast<int>(model.net.weights[l].rows()));
  net["hidden"] = widths;
  net["norm_mean"] = std::vector<double>(model.net.norm_mean.data(),
                                         model.net.norm_mean.data() + model.net.norm_mean.size());
  net["norm_std"] = std::vector<double>(model.net.norm_std.data(),
                                        model.net.norm_std.data() + model.net.norm_std.size());
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < model.net.layer_count(); ++l) {
    nlohmann::ordered_json layer;
    const Eigen::MatrixXd& W = model.net.weights[l];
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(W.rows()));
    for (int r = 0; r < W.rows(); ++r) {
      rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(W.cols()));
      for (int c = 0; c < W.cols(); ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = W(r, c);
    }
    layer["weight"] = rows;
    layer["bias"] = std::vector<double>(model.net.biases[l].data(),
                                        model.net.biases[l].data() + model.net.biases[l].size());
    layers.push_back(layer);
  }
  net["layers"] = layers;
  j["net"] = net;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << '\n';
}

CompletionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported format version");
  CompletionModel model;
  model.shape.bins = j.at("shape").at("bins").get<int>();
  model.shape.latent_bound = j.at("shape").at("latent_bound").get<double>();
  model.shape.demand_bound = j.at("shape").at("demand_bound").get<double>();
  const auto& net = j.at("net");
  const auto mean = net.at("norm_mean").get<std::vector<double>>();
  const auto stdv = net.at("norm_std").get<std::vector<double>>();
  model.net.norm_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<long>(mean.size()));
  model.net.norm_std = Eigen::Map<const Eigen::VectorXd>(stdv.data(), static_cast<long>(stdv.size()));
  for (const auto& layer : net.at("layers")) {
    const auto rows = layer.at("weight").get<std::vector<std::vector<double>>>();
    const auto bias = layer.at("bias").get<std::vector<double>>();
    Eigen::MatrixXd W(static_cast<long>(rows.size()), static_cast<long>(rows.at(0).size()));
    for (long r = 0; r < W.rows(); ++r)
      for (long c = 0; c < W.cols(); ++c)
        W(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    model.net.weights.push_back(std::move(W));
    model.net.biases.push_back(
        Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<long>(bias.size())));
  }
  if (model.net.output_dim() != model.shape.raw_dim())
    throw std::runtime_error("load_checkpoint: head dimension inconsistent with flow shape");
  return model;
}

}  // namespace icgps
