#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rolldrop/rng.hpp"

namespace rolldrop::nn {

// Rollout: Roll-Drop masks may fire. Update: the network is deterministic.
enum class NetMode { Rollout, Update };

// Fully connected net with tanh hidden layers and a linear head.
//
// Parameters live in one flat buffer. Layer l (0-based) stores its weight as
// an in x out row-major matrix (W[k][j] connects input k to output j)
// followed by its out-sized bias. Pre-activations are accumulated as
// z[j] = b[j] + x[0]*W[0][j] + x[1]*W[1][j] + ... in ascending input order;
// every kernel in the project honours that order so the serial and blocked
// paths agree bitwise.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> sizes);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t max_width() const;

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
  }

  std::span<double> weight(std::size_t layer);
  std::span<const double> weight(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Gaussian policy: mean from the MLP, state-independent learned log std.
struct PolicyNet {
  Mlp body;
  std::vector<double> log_std;
  // 1-based index of the hidden layer whose activations Roll-Drop masks.
  std::size_t rolldrop_position = 2;
  double rolldrop_p = 0.0;
  // Dropout applied in Update mode only (the train-time dropout ablation).
  double train_dropout_p = 0.0;

  std::size_t obs_size() const { return body.input_size(); }
  std::size_t action_size() const { return body.output_size(); }
  std::size_t dropout_width() const { return body.sizes()[rolldrop_position]; }

  bool operator==(const PolicyNet&) const = default;
};

struct ValueNet {
  Mlp body;
  bool operator==(const ValueNet&) const = default;
};

struct DropEvent {
  std::uint64_t iteration = 0;
  std::uint32_t env_id = 0;
  std::uint64_t step = 0;
  std::size_t layer = 0;
  std::vector<std::uint32_t> units;

  bool operator==(const DropEvent&) const = default;
};

// 1 = unit dropped.
using DropMask = std::vector<std::uint8_t>;

struct NetSpec {
  std::size_t obs_size = 0;
  std::size_t action_size = 0;
  std::vector<std::size_t> hidden{128, 64, 64};
  std::size_t rolldrop_position = 2;
  double rolldrop_p = 0.0;
  double train_dropout_p = 0.0;
  double sigma_init = 1.0;
  // Output layer weights of the policy are scaled by this at init so the
  // initial mean action is close to zero.
  double policy_head_scale = 0.01;
};

void validate_probability(double p, const char* what);
void validate(const PolicyNet& net);

Mlp make_mlp(const std::vector<std::size_t>& sizes, RngStream& init_rng);
PolicyNet make_policy(const NetSpec& spec, RngStream& init_rng);
ValueNet make_value(const NetSpec& spec, RngStream& init_rng);

// Consumes exactly `width` draws from `rng`, whatever p is.
DropMask draw_drop_mask(double p, std::size_t width, RngStream& rng);

struct PolicyOutput {
  std::vector<double> mean;
  // Present iff at least one unit was zeroed. Only layer and units are set;
  // the caller stamps iteration, env and step.
  std::optional<DropEvent> drop;
};

// Update mode ignores rng. Rollout mode draws a Roll-Drop mask from the
// dedicated dropout stream; dropped units are zeroed and survivors are left
// unscaled. `forced` bits are OR-ed into the drawn mask.
PolicyOutput forward(const PolicyNet& net, std::span<const double> obs, NetMode mode,
                     RngStream& dropout_rng, std::span<const std::uint8_t> forced = {});

// Deterministic inference through the plain network.
std::vector<double> infer(const Mlp& net, std::span<const double> obs);
double value(const ValueNet& net, std::span<const double> obs);

struct ActionSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

// action = mean + exp(log_std) * z with z ~ N(0, I); draws 2 per dimension.
ActionSample sample_action(std::span<const double> mean, std::span<const double> log_std,
                           RngStream& rng);
ActionSample action_from_noise(std::span<const double> mean, std::span<const double> log_std,
                               std::span<const double> z);
double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> action);
double gaussian_entropy(std::span<const double> log_std);

// Multiplier applied to the post-activation output of one hidden layer
// (0 drops a unit, 1/(1-p) rescales a survivor of train-time dropout).
struct UnitScale {
  std::size_t layer = 0;  // 1-based hidden layer index
  std::span<const double> scale;
};

// Activations of one forward pass, kept for the reverse pass.
struct Tape {
  const Mlp* net = nullptr;
  // activations[0] is the input; activations[l] for hidden l is tanh(z)
  // before any unit scaling; the last entry is the linear output.
  std::vector<std::vector<double>> activations;
  std::vector<double> scale;
  std::size_t scaled_layer = 0;

  bool empty() const { return activations.empty(); }
  void clear();
  std::span<const double> output() const { return activations.back(); }
};

void forward_cached(const Mlp& net, std::span<const double> input, Tape& tape,
                    const UnitScale* scale = nullptr);

// Accumulates d(loss)/d(params) into grad_params (same layout as params) and,
// if non-empty, writes d(loss)/d(input) into grad_input.
void backward_into(const Mlp& net, const Tape& tape, std::span<const double> grad_output,
                   std::span<double> grad_params, std::span<double> grad_input = {});

struct ParamGrads {
  std::vector<double> body;
  std::vector<double> log_std;
};

ParamGrads backward(const PolicyNet& net, const Tape& tape, std::span<const double> grad_mean,
                    std::span<const double> grad_log_std);
ParamGrads backward(const ValueNet& net, const Tape& tape, std::span<const double> grad_value);

// Unit scale vector for train-time dropout (inverted scaling).
std::vector<double> train_dropout_scale(double p, std::size_t width, RngStream& rng);

}  // namespace rolldrop::nn
