#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>

namespace rolldrop::nn {

// tanh used by every network in the project. glibc's tanh is a scalar call
// that dominates the update; this one is branch-free over 4 lanes and agrees
// with std::tanh to a few ulp. Every element is computed by the same lane code
// whether it goes through the scalar or the span overload, so results do not
// depend on batch layout.
namespace detail {

using v4d = double __attribute__((vector_size(32)));
using v4i = std::int64_t __attribute__((vector_size(32)));

inline v4d tanh4(v4d x) {
  const v4i xb = (v4i)x;
  const v4i sign = xb & static_cast<std::int64_t>(0x8000000000000000ULL);
  const v4i ab = xb ^ sign;
  // |x| >= 20 rounds to 1; clamping keeps 2^k finite.
  constexpr std::int64_t kClamp = 0x4034000000000000LL;  // 20.0
  const v4i below = ab < kClamp;
  const v4d y = 2.0 * (v4d)((ab & below) | (kClamp & ~below));

  // expm1(y) = 2^k (expm1(r) + 1) - 1 with y = k ln2 + r, |r| <= ln2 / 2.
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52
  const v4d m = y * 1.4426950408889634 + kShift;
  const v4d k = m - kShift;
  const v4d r = (y - k * 6.93147180369123816490e-01) - k * 1.90821492927058770002e-10;
  v4d p = r * (1.0 / 6227020800.0) + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  const v4d em = r + (r * r) * p;
  const v4d s = (v4d)((((v4i)m) - static_cast<std::int64_t>(0x4338000000000000LL) + 1023) << 52);
  const v4d t = s * em + (s - 1.0);
  const v4d th = t / (t + 2.0);

  const v4i nan = ab > static_cast<std::int64_t>(0x7FF0000000000000LL);
  return (v4d)((xb & nan) | ((((v4i)th) ^ sign) & ~nan));
}

}  // namespace detail

inline double tanh(double x) {
  const detail::v4d v = {x, x, x, x};
  return detail::tanh4(v)[0];
}

inline void tanh_inplace(std::span<double> x) {
  std::size_t i = 0;
  for (; i + 4 <= x.size(); i += 4) {
    detail::v4d v;
    std::memcpy(&v, x.data() + i, sizeof v);
    v = detail::tanh4(v);
    std::memcpy(x.data() + i, &v, sizeof v);
  }
  for (; i < x.size(); ++i) x[i] = tanh(x[i]);
}

}  // namespace rolldrop::nn
