#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rolldrop/nn.hpp"

// Blocked multi-sample MLP kernels. They follow exactly the per-element
// accumulation order of the per-sample reference in nn.cpp (forward_cached /
// backward_into), so a block of rows processed here is bitwise identical to
// the same rows pushed through the reference one at a time.
namespace rolldrop::kernels {

struct BatchTape {
  std::size_t rows = 0;
  // act[l] is rows x sizes[l]; hidden entries hold tanh(z) before scaling.
  std::vector<std::vector<double>> act;
  std::size_t scaled_layer = 0;
  std::vector<double> scale;   // rows x width(scaled_layer)
  std::vector<double> scaled;  // act[scaled_layer] * scale
};

// Per-layer transposes (out x in) used by the input-gradient product.
struct TransposedWeights {
  std::vector<std::vector<double>> wt;
  static TransposedWeights of(const nn::Mlp& net);
};

// input: rows x in, row-major. scale (rows x width) multiplies the tanh output
// of hidden layer `scaled_layer` when non-empty.
void batch_forward(const nn::Mlp& net, std::span<const double> input, std::size_t rows,
                   BatchTape& tape, std::span<const double> scale = {},
                   std::size_t scaled_layer = 0);

// Accumulates parameter gradients of all rows into grad_params, in ascending
// row order. grad_output is rows x out.
void batch_backward(const nn::Mlp& net, const TransposedWeights& wt, const BatchTape& tape,
                    std::span<const double> grad_output, std::span<double> grad_params);

}  // namespace rolldrop::kernels
