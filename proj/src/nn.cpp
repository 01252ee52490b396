#include "rolldrop/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rolldrop/activation.hpp"
#include "rolldrop/errors.hpp"

namespace rolldrop::nn {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

// z = b + sum_k x[k] * W[k][:], ascending k.
void dense(const Mlp& net, std::size_t layer, const double* x, double* z) {
  const std::size_t in = net.sizes()[layer];
  const std::size_t out = net.sizes()[layer + 1];
  const double* w = net.weight(layer).data();
  const double* b = net.bias(layer).data();
  for (std::size_t j = 0; j < out; ++j) z[j] = b[j];
  for (std::size_t k = 0; k < in; ++k) {
    const double xk = x[k];
    const double* row = w + k * out;
    for (std::size_t j = 0; j < out; ++j) z[j] += xk * row[j];
  }
}

void check_input(const Mlp& net, std::size_t n) {
  if (net.num_layers() == 0) throw ContractViolation("network has no layers");
  if (n != net.input_size()) {
    throw ContractViolation("input has " + std::to_string(n) + " entries, network expects " +
                            std::to_string(net.input_size()));
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ContractViolation("an MLP needs at least input and output sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ContractViolation("layer sizes must be positive");
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

std::size_t Mlp::max_width() const { return *std::max_element(sizes_.begin(), sizes_.end()); }

std::span<double> Mlp::weight(std::size_t layer) {
  return {params_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}
std::span<const double> Mlp::weight(std::size_t layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}
std::span<double> Mlp::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}
std::span<const double> Mlp::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

void validate_probability(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1), got " + std::to_string(p));
  }
}

void validate(const PolicyNet& net) {
  const std::size_t hidden = net.body.num_layers() - 1;
  if (net.rolldrop_position < 1 || net.rolldrop_position > hidden) {
    throw ConfigError("rolldrop_position " + std::to_string(net.rolldrop_position) +
                      " does not index a hidden layer (1.." + std::to_string(hidden) + ")");
  }
  if (net.log_std.size() != net.action_size()) {
    throw ContractViolation("log_std size does not match the action size");
  }
  validate_probability(net.rolldrop_p, "rolldrop_p");
  validate_probability(net.train_dropout_p, "train_dropout_p");
}

Mlp make_mlp(const std::vector<std::size_t>& sizes, RngStream& init_rng) {
  Mlp net(sizes);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    for (double& w : net.weight(l)) w = init_rng.uniform(-bound, bound);
    for (double& b : net.bias(l)) b = init_rng.uniform(-bound, bound);
  }
  return net;
}

PolicyNet make_policy(const NetSpec& spec, RngStream& init_rng) {
  std::vector<std::size_t> sizes{spec.obs_size};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(spec.action_size);
  PolicyNet net;
  net.body = make_mlp(sizes, init_rng);
  const std::size_t head = net.body.num_layers() - 1;
  for (double& w : net.body.weight(head)) w *= spec.policy_head_scale;
  for (double& b : net.body.bias(head)) b = 0.0;
  if (!(spec.sigma_init > 0.0)) throw ConfigError("sigma_init must be positive");
  net.log_std.assign(spec.action_size, std::log(spec.sigma_init));
  net.rolldrop_position = spec.rolldrop_position;
  net.rolldrop_p = spec.rolldrop_p;
  net.train_dropout_p = spec.train_dropout_p;
  validate(net);
  return net;
}

ValueNet make_value(const NetSpec& spec, RngStream& init_rng) {
  std::vector<std::size_t> sizes{spec.obs_size};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(1);
  return ValueNet{make_mlp(sizes, init_rng)};
}

DropMask draw_drop_mask(double p, std::size_t width, RngStream& rng) {
  validate_probability(p, "dropout probability");
  DropMask mask(width, 0);
  for (std::size_t i = 0; i < width; ++i) mask[i] = rng.uniform() < p ? 1 : 0;
  return mask;
}

std::vector<double> train_dropout_scale(double p, std::size_t width, RngStream& rng) {
  validate_probability(p, "train_dropout_p");
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> scale(width);
  for (std::size_t i = 0; i < width; ++i) scale[i] = rng.uniform() < p ? 0.0 : keep;
  return scale;
}

PolicyOutput forward(const PolicyNet& net, std::span<const double> obs, NetMode mode,
                     RngStream& dropout_rng, std::span<const std::uint8_t> forced) {
  const Mlp& body = net.body;
  check_input(body, obs.size());

  DropMask mask;
  bool any_drop = false;
  if (mode == NetMode::Rollout) {
    mask = draw_drop_mask(net.rolldrop_p, net.dropout_width(), dropout_rng);
    if (!forced.empty()) {
      if (forced.size() != mask.size()) throw ContractViolation("forced mask width mismatch");
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] |= forced[i];
    }
    any_drop = std::any_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
  }

  std::vector<double> x(obs.begin(), obs.end());
  std::vector<double> z;
  const std::size_t layers = body.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    z.assign(body.sizes()[l + 1], 0.0);
    dense(body, l, x.data(), z.data());
    if (l + 1 < layers) {
      tanh_inplace(z);
      if (any_drop && l + 1 == net.rolldrop_position) {
        for (std::size_t u = 0; u < z.size(); ++u)
          if (mask[u]) z[u] = 0.0;
      }
    }
    x.swap(z);
  }

  PolicyOutput out{std::move(x), std::nullopt};
  if (any_drop) {
    DropEvent ev;
    ev.layer = net.rolldrop_position;
    for (std::size_t u = 0; u < mask.size(); ++u)
      if (mask[u]) ev.units.push_back(static_cast<std::uint32_t>(u));
    out.drop = std::move(ev);
  }
  return out;
}

std::vector<double> infer(const Mlp& net, std::span<const double> obs) {
  check_input(net, obs.size());
  std::vector<double> x(obs.begin(), obs.end());
  std::vector<double> z;
  const std::size_t layers = net.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    z.assign(net.sizes()[l + 1], 0.0);
    dense(net, l, x.data(), z.data());
    if (l + 1 < layers)
      tanh_inplace(z);
    x.swap(z);
  }
  return x;
}

double value(const ValueNet& net, std::span<const double> obs) { return infer(net.body, obs)[0]; }

double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw ContractViolation("gaussian_log_prob: dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double d = (action[i] - mean[i]) / std::exp(log_std[i]);
    lp += -0.5 * d * d - log_std[i] - kHalfLog2Pi;
  }
  return lp;
}

double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double s : log_std) h += s + 0.5 + kHalfLog2Pi;
  return h;
}

ActionSample action_from_noise(std::span<const double> mean, std::span<const double> log_std,
                               std::span<const double> z) {
  if (mean.size() != log_std.size() || mean.size() != z.size())
    throw ContractViolation("sample_action: dimension mismatch");
  ActionSample s;
  s.action.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) s.action[i] = mean[i] + std::exp(log_std[i]) * z[i];
  s.log_prob = gaussian_log_prob(mean, log_std, s.action);
  return s;
}

ActionSample sample_action(std::span<const double> mean, std::span<const double> log_std,
                           RngStream& rng) {
  if (mean.size() != log_std.size()) throw ContractViolation("sample_action: dimension mismatch");
  std::vector<double> z(mean.size());
  for (double& v : z) v = rng.normal();
  return action_from_noise(mean, log_std, z);
}

void Tape::clear() {
  net = nullptr;
  activations.clear();
  scale.clear();
  scaled_layer = 0;
}

void forward_cached(const Mlp& net, std::span<const double> input, Tape& tape,
                    const UnitScale* scale) {
  check_input(net, input.size());
  const std::size_t layers = net.num_layers();
  tape.net = &net;
  tape.activations.resize(layers + 1);
  tape.activations[0].assign(input.begin(), input.end());
  tape.scaled_layer = 0;
  tape.scale.clear();
  if (scale != nullptr) {
    if (scale->layer < 1 || scale->layer >= layers || scale->scale.size() != net.sizes()[scale->layer])
      throw ContractViolation("unit scale does not match a hidden layer");
    tape.scaled_layer = scale->layer;
    tape.scale.assign(scale->scale.begin(), scale->scale.end());
  }
  std::vector<double> scaled;
  for (std::size_t l = 0; l < layers; ++l) {
    auto& z = tape.activations[l + 1];
    z.assign(net.sizes()[l + 1], 0.0);
    const double* x = tape.activations[l].data();
    if (l > 0 && l == tape.scaled_layer) x = scaled.data();
    dense(net, l, x, z.data());
    if (l + 1 < layers) {
      tanh_inplace(z);
      if (l + 1 == tape.scaled_layer) {
        scaled.resize(z.size());
        for (std::size_t u = 0; u < z.size(); ++u) scaled[u] = z[u] * tape.scale[u];
      }
    }
  }
}

void backward_into(const Mlp& net, const Tape& tape, std::span<const double> grad_output,
                   std::span<double> grad_params, std::span<double> grad_input) {
  if (tape.empty() || tape.net != &net)
    throw ContractViolation("backward called without a cached forward pass for this network");
  if (grad_output.size() != net.output_size())
    throw ContractViolation("output gradient has the wrong size");
  if (grad_params.size() != net.param_count())
    throw ContractViolation("parameter gradient buffer has the wrong size");
  if (!grad_input.empty() && grad_input.size() != net.input_size())
    throw ContractViolation("input gradient buffer has the wrong size");

  const std::size_t layers = net.num_layers();
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  std::vector<double> dx;
  std::vector<double> scaled;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = net.sizes()[l];
    const std::size_t out = net.sizes()[l + 1];
    const double* x = tape.activations[l].data();
    if (l > 0 && l == tape.scaled_layer) {
      scaled.resize(in);
      for (std::size_t u = 0; u < in; ++u) scaled[u] = tape.activations[l][u] * tape.scale[u];
      x = scaled.data();
    }
    double* gw = grad_params.data() + net.weight_offset(l);
    double* gb = grad_params.data() + net.bias_offset(l);
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = x[k];
      double* row = gw + k * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += xk * delta[j];
    }
    for (std::size_t j = 0; j < out; ++j) gb[j] += delta[j];

    if (l == 0 && grad_input.empty()) break;
    const double* w = net.weight(l).data();
    dx.assign(in, 0.0);
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      const double* row = w + k * out;
      for (std::size_t j = 0; j < out; ++j) acc += delta[j] * row[j];
      dx[k] = acc;
    }
    if (l == 0) {
      std::copy(dx.begin(), dx.end(), grad_input.begin());
      break;
    }
    const auto& h = tape.activations[l];
    delta.resize(in);
    if (l == tape.scaled_layer) {
      for (std::size_t u = 0; u < in; ++u) delta[u] = (dx[u] * tape.scale[u]) * (1.0 - h[u] * h[u]);
    } else {
      for (std::size_t u = 0; u < in; ++u) delta[u] = dx[u] * (1.0 - h[u] * h[u]);
    }
  }
}

ParamGrads backward(const PolicyNet& net, const Tape& tape, std::span<const double> grad_mean,
                    std::span<const double> grad_log_std) {
  if (grad_log_std.size() != net.log_std.size())
    throw ContractViolation("log_std gradient has the wrong size");
  ParamGrads g;
  g.body.assign(net.body.param_count(), 0.0);
  backward_into(net.body, tape, grad_mean, g.body);
  g.log_std.assign(grad_log_std.begin(), grad_log_std.end());
  return g;
}

ParamGrads backward(const ValueNet& net, const Tape& tape, std::span<const double> grad_value) {
  ParamGrads g;
  g.body.assign(net.body.param_count(), 0.0);
  backward_into(net.body, tape, grad_value, g.body);
  return g;
}

}  // namespace rolldrop::nn
