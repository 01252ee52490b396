#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rolldrop/nn.hpp"
#include "rolldrop/rng.hpp"
#include "test_util.hpp"

namespace rolldrop::test {

struct GradCheck {
  std::size_t params = 0;
  double rel_error = 0.0;        // parameters
  double input_rel_error = 0.0;  // d loss / d input
};

// Random MLP with at most max_params parameters, loss = c . f(x) for random c.
// Odd cases also route one hidden layer through a random unit scale (the
// train-time dropout path). Central differences with step h.
inline GradCheck finite_difference_check(std::uint64_t seed, std::size_t max_params = 64, double h = 1e-5) {
  RngStream rng(seed, 0, StreamId::Init);
  std::vector<std::size_t> sizes;
  nn::Mlp net;
  for (;;) {
    sizes.clear();
    sizes.push_back(1 + rng.next_u64() % 4);
    const std::size_t hidden = 1 + rng.next_u64() % 3;
    for (std::size_t l = 0; l < hidden; ++l) sizes.push_back(1 + rng.next_u64() % 5);
    sizes.push_back(1 + rng.next_u64() % 3);
    net = nn::Mlp(sizes);
    if (net.param_count() <= max_params) break;
  }
  for (double& p : net.params()) p = rng.uniform(-1.5, 1.5);

  std::vector<double> x(sizes.front()), c(sizes.back());
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  for (double& v : c) v = rng.uniform(-1.0, 1.0);

  std::vector<double> scale;
  nn::UnitScale us;
  const nn::UnitScale* usp = nullptr;
  if (seed % 2 == 1 && sizes.size() > 2) {
    us.layer = 1 + rng.next_u64() % (sizes.size() - 2);
    scale.resize(sizes[us.layer]);
    for (double& s : scale) s = rng.uniform() < 0.3 ? 0.0 : 1.25;
    us.scale = scale;
    usp = &us;
  }

  auto loss = [&](const nn::Mlp& m, std::span<const double> in) {
    nn::Tape t;
    nn::forward_cached(m, in, t, usp);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * t.output()[i];
    return s;
  };

  nn::Tape tape;
  nn::forward_cached(net, x, tape, usp);
  std::vector<double> g(net.param_count(), 0.0), gx(x.size(), 0.0);
  nn::backward_into(net, tape, c, g, gx);

  std::vector<double> fd(net.param_count()), fdx(x.size());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    nn::Mlp plus = net, minus = net;
    plus.params()[i] += h;
    minus.params()[i] -= h;
    fd[i] = (loss(plus, x) - loss(minus, x)) / (2.0 * h);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    fdx[i] = (loss(net, xp) - loss(net, xm)) / (2.0 * h);
  }
  return {net.param_count(), relative_error(g, fd), relative_error(gx, fdx)};
}

// Lambda-return as a weighted sum of n-step advantages, written directly from
// the definition. A done at step d ends the return there (no bootstrap), and
// every longer n-step estimate equals the truncated one.
inline std::vector<double> gae_brute_force(const std::vector<double>& r, const std::vector<double>& v,
                                           const std::vector<std::uint8_t>& done, double bootstrap,
                                           double gamma, double lambda) {
  const std::size_t T = r.size();
  auto n_step = [&](std::size_t t, std::size_t n) {
    double ret = 0.0, disc = 1.0;
    for (std::size_t l = 0; l < n; ++l) {
      ret += disc * r[t + l];
      disc *= gamma;
      if (done[t + l]) return ret - v[t];
    }
    const double boot = t + n < T ? v[t + n] : bootstrap;
    return ret + disc * boot - v[t];
  };
  std::vector<double> adv(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t horizon = T - t;
    double a = 0.0;
    for (std::size_t n = 1; n < horizon; ++n) a += (1.0 - lambda) * std::pow(lambda, double(n - 1)) * n_step(t, n);
    a += std::pow(lambda, double(horizon - 1)) * n_step(t, horizon);
    adv[t] = a;
  }
  return adv;
}

}  // namespace rolldrop::test
