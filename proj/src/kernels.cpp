#include "rolldrop/kernels.hpp"

#include <cmath>
#include <cstring>

#include "rolldrop/activation.hpp"
#include "rolldrop/errors.hpp"

namespace rolldrop::kernels {
namespace {

// C[i][j] = init(i, j) + A(i, 0) B[0][j] + A(i, 1) B[1][j] + ...
// A(i, t) = a[i * ai + t * at]. The register tile changes the loop nest but
// not the order in which any single element is accumulated.
enum class Init { Bias, Zero, Accumulate };

#ifdef __AVX512F__
constexpr int kLanes = 8;
#else
constexpr int kLanes = 4;
#endif
using vec = double __attribute__((vector_size(kLanes * sizeof(double))));

inline vec load(const double* p) {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store(double* p, vec v) { std::memcpy(p, &v, sizeof v); }

template <int RI, int JV, Init kInit>
inline void tile(const double* a, std::size_t ai, std::size_t at, const double* b, std::size_t ldb,
                 const double* bias, double* c, std::size_t ldc, std::size_t depth) {
  vec acc[RI][JV];
  for (int i = 0; i < RI; ++i)
    for (int j = 0; j < JV; ++j) {
      if constexpr (kInit == Init::Bias) acc[i][j] = load(bias + kLanes * j);
      else if constexpr (kInit == Init::Zero) acc[i][j] = vec{};
      else acc[i][j] = load(c + i * ldc + kLanes * j);
    }
  for (std::size_t t = 0; t < depth; ++t) {
    vec bv[JV];
    for (int j = 0; j < JV; ++j) bv[j] = load(b + t * ldb + kLanes * j);
    for (int i = 0; i < RI; ++i) {
      const double av = a[i * ai + t * at];
      for (int j = 0; j < JV; ++j) acc[i][j] += av * bv[j];
    }
  }
  for (int i = 0; i < RI; ++i)
    for (int j = 0; j < JV; ++j) store(c + i * ldc + kLanes * j, acc[i][j]);
}

// Columns left over after the vector tiles.
template <Init kInit>
void column(const double* a, std::size_t ai, std::size_t at, const double* b, std::size_t ldb,
            const double* bias, double* c, std::size_t ldc, std::size_t rows, std::size_t depth) {
  for (std::size_t i = 0; i < rows; ++i) {
    double acc;
    if constexpr (kInit == Init::Bias) acc = *bias;
    else if constexpr (kInit == Init::Zero) acc = 0.0;
    else acc = c[i * ldc];
    for (std::size_t t = 0; t < depth; ++t) acc += a[i * ai + t * at] * b[t * ldb];
    c[i * ldc] = acc;
  }
}

template <int RI, Init kInit>
void tile_row(const double* a, std::size_t ai, std::size_t at, const double* b, std::size_t ldb,
              const double* bias, double* c, std::size_t ldc, std::size_t cols, std::size_t depth) {
  std::size_t j = 0;
  constexpr int kWide = 16 / kLanes;
  for (; j + 16 <= cols; j += 16)
    tile<RI, kWide, kInit>(a, ai, at, b + j, ldb, bias ? bias + j : nullptr, c + j, ldc, depth);
  for (; j + kLanes <= cols; j += kLanes)
    tile<RI, 1, kInit>(a, ai, at, b + j, ldb, bias ? bias + j : nullptr, c + j, ldc, depth);
}

template <Init kInit>
void gemm(const double* a, std::size_t ai, std::size_t at, const double* b, std::size_t ldb,
          const double* bias, double* c, std::size_t ldc, std::size_t rows, std::size_t cols,
          std::size_t depth) {
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4)
    tile_row<4, kInit>(a + i * ai, ai, at, b, ldb, bias, c + i * ldc, ldc, cols, depth);
  for (; i < rows; ++i)
    tile_row<1, kInit>(a + i * ai, ai, at, b, ldb, bias, c + i * ldc, ldc, cols, depth);
  for (std::size_t j = cols - cols % kLanes; j < cols; ++j)
    column<kInit>(a, ai, at, b + j, ldb, bias ? bias + j : nullptr, c + j, ldc, rows, depth);
}

// Z[r] = b + sum_k X[r][k] W[k], ascending k.
void dense_rows(const double* w, const double* b, std::size_t in, std::size_t out,
                const double* x, double* z, std::size_t rows) {
  gemm<Init::Bias>(x, in, 1, w, out, b, z, out, rows, out, in);
}

// G[k][j] += sum_r X[r][k] * D[r][j], rows in ascending order.
void accumulate_outer(const double* x, const double* d, std::size_t in, std::size_t out,
                      std::size_t rows, double* g) {
  gemm<Init::Accumulate>(x, 1, in, d, out, nullptr, g, out, in, out, rows);
}

// DX[r][k] = sum_j D[r][j] * Wt[j][k], ascending j, starting from 0.
void input_grad(const double* wt, const double* d, std::size_t in, std::size_t out,
                std::size_t rows, double* dx) {
  gemm<Init::Zero>(d, out, 1, wt, in, nullptr, dx, in, rows, in, out);
}

}  // namespace

TransposedWeights TransposedWeights::of(const nn::Mlp& net) {
  TransposedWeights t;
  t.wt.resize(net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::size_t in = net.sizes()[l];
    const std::size_t out = net.sizes()[l + 1];
    const auto w = net.weight(l);
    auto& dst = t.wt[l];
    dst.resize(in * out);
    for (std::size_t k = 0; k < in; ++k)
      for (std::size_t j = 0; j < out; ++j) dst[j * in + k] = w[k * out + j];
  }
  return t;
}

void batch_forward(const nn::Mlp& net, std::span<const double> input, std::size_t rows,
                   BatchTape& tape, std::span<const double> scale, std::size_t scaled_layer) {
  const std::size_t layers = net.num_layers();
  if (input.size() != rows * net.input_size()) throw ContractViolation("batch input shape mismatch");
  tape.rows = rows;
  tape.act.resize(layers + 1);
  tape.act[0].assign(input.begin(), input.end());
  tape.scaled_layer = scale.empty() ? 0 : scaled_layer;
  if (!scale.empty()) {
    if (scaled_layer < 1 || scaled_layer >= layers || scale.size() != rows * net.sizes()[scaled_layer])
      throw ContractViolation("batch unit scale does not match a hidden layer");
    tape.scale.assign(scale.begin(), scale.end());
  } else {
    tape.scale.clear();
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = net.sizes()[l];
    const std::size_t out = net.sizes()[l + 1];
    auto& z = tape.act[l + 1];
    z.resize(rows * out);
    const double* x = (l > 0 && l == tape.scaled_layer) ? tape.scaled.data() : tape.act[l].data();
    dense_rows(net.weight(l).data(), net.bias(l).data(), in, out, x, z.data(), rows);
    if (l + 1 < layers) {
      nn::tanh_inplace(z);
      if (l + 1 == tape.scaled_layer) {
        tape.scaled.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) tape.scaled[i] = z[i] * tape.scale[i];
      }
    }
  }
}

void batch_backward(const nn::Mlp& net, const TransposedWeights& wt, const BatchTape& tape,
                    std::span<const double> grad_output, std::span<double> grad_params) {
  const std::size_t layers = net.num_layers();
  const std::size_t rows = tape.rows;
  if (tape.act.size() != layers + 1) throw ContractViolation("batch_backward without a forward pass");
  if (grad_output.size() != rows * net.output_size())
    throw ContractViolation("batch output gradient shape mismatch");
  if (grad_params.size() != net.param_count())
    throw ContractViolation("parameter gradient buffer has the wrong size");

  std::vector<double> delta(grad_output.begin(), grad_output.end());
  std::vector<double> dx;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = net.sizes()[l];
    const std::size_t out = net.sizes()[l + 1];
    const double* x = (l > 0 && l == tape.scaled_layer) ? tape.scaled.data() : tape.act[l].data();
    accumulate_outer(x, delta.data(), in, out, rows, grad_params.data() + net.weight_offset(l));
    double* gb = grad_params.data() + net.bias_offset(l);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out; ++j) gb[j] += delta[r * out + j];
    if (l == 0) break;

    dx.resize(rows * in);
    input_grad(wt.wt[l].data(), delta.data(), in, out, rows, dx.data());
    const auto& h = tape.act[l];
    delta.resize(rows * in);
    if (l == tape.scaled_layer) {
      for (std::size_t i = 0; i < rows * in; ++i)
        delta[i] = (dx[i] * tape.scale[i]) * (1.0 - h[i] * h[i]);
    } else {
      for (std::size_t i = 0; i < rows * in; ++i) delta[i] = dx[i] * (1.0 - h[i] * h[i]);
    }
  }
}

}  // namespace rolldrop::kernels
