#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rolldrop/activation.hpp"
#include "rolldrop/checkpoint.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/kernels.hpp"
#include "rolldrop/nn.hpp"
#include "test_util.hpp"

using namespace rolldrop;
using namespace rolldrop::nn;

namespace {

PolicyNet small_policy(std::uint64_t seed, double p = 0.0) {
  NetSpec spec;
  spec.obs_size = 5;
  spec.action_size = 3;
  spec.hidden = {6, 4, 4};
  spec.rolldrop_p = p;
  spec.policy_head_scale = 1.0;
  RngStream rng(seed, kLearnerStream, StreamId::Init);
  return make_policy(spec, rng);
}

std::vector<double> random_obs(std::size_t n, RngStream& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("tanh agrees with std::tanh to a few ulp") {
  RngStream rng(3, 0, StreamId::Init);
  double worst = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.next_u64() % 30) - 25);
    const double ref = std::tanh(x);
    const double ulp = std::abs(std::nextafter(ref, 2.0) - ref);
    worst = std::max(worst, std::abs(nn::tanh(x) - ref) / ulp);
  }
  CHECK(worst <= 4.0);
  CHECK(nn::tanh(0.0) == 0.0);
  CHECK(std::signbit(nn::tanh(-0.0)));
  CHECK(nn::tanh(50.0) == 1.0);
  CHECK(nn::tanh(-INFINITY) == -1.0);
  CHECK(std::isnan(nn::tanh(NAN)));

  std::vector<double> v(37);
  for (double& x : v) x = rng.uniform(-5.0, 5.0);
  std::vector<double> w = v;
  tanh_inplace(w);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w[i] == nn::tanh(v[i]));
}

TEST_CASE("identity network passes the input through") {
  Mlp net({2, 2});
  auto w = net.weight(0);
  w[0] = 1.0;
  w[3] = 1.0;
  const std::vector<double> obs{0.3, -0.7};
  const auto y = infer(net, obs);
  CHECK(y[0] == 0.3);
  CHECK(y[1] == -0.7);
}

TEST_CASE("p = 0 in Rollout mode equals Update mode and reports no drop") {
  const PolicyNet net = small_policy(11);
  RngStream obs_rng(2, 0, StreamId::ObsNoise);
  RngStream drop(5, 0, StreamId::Dropout);
  for (int i = 0; i < 50; ++i) {
    const auto obs = random_obs(5, obs_rng);
    const auto r = forward(net, obs, NetMode::Rollout, drop);
    const auto u = forward(net, obs, NetMode::Update, drop);
    CHECK(test::bitwise_equal(r.mean, u.mean));
    CHECK_FALSE(r.drop.has_value());
  }
  CHECK(drop.counter() == 50u * 4u);  // width draws per rollout forward, none in Update mode
}

TEST_CASE("forced drop matches a hand-propagated forward pass") {
  // 2 -> 3 -> 2 -> 1, drop unit 0 of hidden layer 2.
  Mlp body({2, 3, 2, 1});
  const std::vector<double> w0{0.1, -0.2, 0.3, 0.4, 0.5, -0.6};
  const std::vector<double> b0{0.05, -0.05, 0.1};
  const std::vector<double> w1{0.7, -0.1, 0.2, 0.3, -0.4, 0.6};
  const std::vector<double> b1{0.0, 0.2};
  const std::vector<double> w2{1.5, -2.0};
  const std::vector<double> b2{0.25};
  std::copy(w0.begin(), w0.end(), body.weight(0).begin());
  std::copy(b0.begin(), b0.end(), body.bias(0).begin());
  std::copy(w1.begin(), w1.end(), body.weight(1).begin());
  std::copy(b1.begin(), b1.end(), body.bias(1).begin());
  std::copy(w2.begin(), w2.end(), body.weight(2).begin());
  std::copy(b2.begin(), b2.end(), body.bias(2).begin());
  PolicyNet net{body, {0.0}, 2, 0.0, 0.0};

  const double x0 = 0.8, x1 = -0.3;
  double h1[3];
  for (int j = 0; j < 3; ++j) h1[j] = std::tanh(b0[j] + x0 * w0[j] + x1 * w0[3 + j]);
  double h2[2];
  for (int j = 0; j < 2; ++j) h2[j] = std::tanh(b1[j] + h1[0] * w1[j] + h1[1] * w1[2 + j] + h1[2] * w1[4 + j]);
  const double dropped = b2[0] + 0.0 * w2[0] + h2[1] * w2[1];
  const double plain = b2[0] + h2[0] * w2[0] + h2[1] * w2[1];

  RngStream rng(9, 0, StreamId::Dropout);
  const std::vector<std::uint8_t> forced{1, 0};
  const std::vector<double> obs{x0, x1};
  const auto out = forward(net, obs, NetMode::Rollout, rng, forced);
  CHECK(out.mean[0] == doctest::Approx(dropped).epsilon(1e-14));
  REQUIRE(out.drop.has_value());
  CHECK(out.drop->layer == 2);
  CHECK(out.drop->units == std::vector<std::uint32_t>{0});
  const auto upd = forward(net, obs, NetMode::Update, rng);
  CHECK(upd.mean[0] == doctest::Approx(plain).epsilon(1e-14));
  CHECK_FALSE(upd.drop.has_value());
}

TEST_CASE("forward rejects a wrong input size") {
  const PolicyNet net = small_policy(1);
  RngStream rng(1, 0, StreamId::Dropout);
  const std::vector<double> obs(4, 0.0);
  CHECK_THROWS_AS(forward(net, obs, NetMode::Update, rng), ContractViolation);
}

TEST_CASE("sample_action examples") {
  SUBCASE("zero draw returns the mean") {
    const std::vector<double> mean{0.3, -1.2}, ls(2, std::log(0.2)), z(2, 0.0);
    const auto s = action_from_noise(mean, ls, z);
    CHECK(s.action == mean);
    const double expect = -2.0 * std::log(0.2 * std::sqrt(2.0 * std::numbers::pi));
    CHECK(s.log_prob == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("standard normal density at 1") {
    const std::vector<double> mean{0.0}, ls{0.0}, a{1.0};
    CHECK(gaussian_log_prob(mean, ls, a) == doctest::Approx(-1.41894).epsilon(1e-5));
    CHECK(gaussian_log_prob(mean, ls, a) ==
          doctest::Approx(-0.5 - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  }
  SUBCASE("log_prob of the returned action is exact") {
    RngStream rng(4, 0, StreamId::ActionNoise);
    const std::vector<double> mean{0.1, 0.2, -0.3}, ls{-0.5, 0.0, 0.3};
    for (int i = 0; i < 20; ++i) {
      const auto s = sample_action(mean, ls, rng);
      CHECK(s.log_prob == doctest::Approx(gaussian_log_prob(mean, ls, s.action)).epsilon(1e-14));
    }
    CHECK(rng.counter() == 20u * 3u * 2u);
  }
  SUBCASE("Monte-Carlo mean") {
    RngStream rng(8, 0, StreamId::ActionNoise);
    const std::vector<double> mean{0.7}, ls{std::log(0.5)};
    const int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_action(mean, ls, rng).action[0];
    const double se = 0.5 / std::sqrt(double(n));
    CHECK(std::abs(sum / n - 0.7) <= 4.0 * se);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("zero upstream gradient") {
    const PolicyNet net = small_policy(2);
    Tape tape;
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5};
    forward_cached(net.body, x, tape);
    const std::vector<double> zero(3, 0.0);
    const auto g = backward(net, tape, zero, zero);
    for (double v : g.body) CHECK(v == 0.0);
    for (double v : g.log_std) CHECK(v == 0.0);
  }
  SUBCASE("linear layer, loss = y0") {
    Mlp net({3, 2});
    RngStream rng(3, 0, StreamId::Init);
    for (double& p : net.params()) p = rng.uniform(-1.0, 1.0);
    const std::vector<double> x{0.5, -1.5, 2.0};
    Tape tape;
    forward_cached(net, x, tape);
    std::vector<double> g(net.param_count(), 0.0);
    const std::vector<double> up{1.0, 0.0};
    backward_into(net, tape, up, g);
    // W is in x out, so d y0 / d W[k][0] = x[k]; column 1 is untouched.
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(g[k * 2 + 0] == x[k]);
      CHECK(g[k * 2 + 1] == 0.0);
    }
    CHECK(g[net.bias_offset(0)] == 1.0);
  }
  SUBCASE("without a cached forward") {
    const PolicyNet net = small_policy(2);
    Tape tape;
    const std::vector<double> up(3, 1.0);
    CHECK_THROWS_AS(backward(net, tape, up, up), ContractViolation);
  }
  SUBCASE("finite differences on random small nets") {
    for (std::uint64_t s = 0; s < 40; ++s) {
      const auto r = test::finite_difference_check(1000 + s);
      CHECK(r.params <= 64);
      CHECK(r.rel_error <= 1e-5);
      CHECK(r.input_rel_error <= 1e-5);
    }
  }
}

TEST_CASE("draw_drop_mask") {
  SUBCASE("p = 0 still consumes width draws") {
    RngStream rng(1, 0, StreamId::Dropout);
    const auto m = draw_drop_mask(0.0, 64, rng);
    CHECK(std::count(m.begin(), m.end(), 1) == 0);
    CHECK(rng.counter() == 64);
  }
  SUBCASE("binomial concentration at p = 0.5") {
    RngStream rng(2, 0, StreamId::Dropout);
    const std::size_t w = 1000000;
    const auto m = draw_drop_mask(0.5, w, rng);
    const double frac = double(std::count(m.begin(), m.end(), 1)) / double(w);
    CHECK(std::abs(frac - 0.5) <= 4.0 * std::sqrt(0.25 / double(w)));
  }
  SUBCASE("same counter, same mask") {
    RngStream a(3, 7, StreamId::Dropout, 100), b(3, 7, StreamId::Dropout, 100);
    CHECK(draw_drop_mask(0.3, 128, a) == draw_drop_mask(0.3, 128, b));
  }
  SUBCASE("p outside [0, 1)") {
    RngStream rng(1, 0, StreamId::Dropout);
    CHECK_THROWS_AS(draw_drop_mask(1.0, 4, rng), ConfigError);
    CHECK_THROWS_AS(draw_drop_mask(-0.1, 4, rng), ConfigError);
  }
}

TEST_CASE("no-fire equivalence over a long rollout") {
  const PolicyNet net = small_policy(21, 1e-9);
  RngStream obs_rng(2, 0, StreamId::ObsNoise), drop(5, 0, StreamId::Dropout);
  for (int i = 0; i < 2000; ++i) {
    const auto obs = random_obs(5, obs_rng);
    const auto r = forward(net, obs, NetMode::Rollout, drop);
    REQUIRE_FALSE(r.drop.has_value());
    CHECK(test::bitwise_equal(r.mean, forward(net, obs, NetMode::Update, drop).mean));
  }
}

TEST_CASE("checkpoint round trip") {
  PolicyNet p = small_policy(5, 0.0001);
  p.train_dropout_p = 0.001;
  const auto bytes = serialize_net(p);
  const auto back = std::get<PolicyNet>(deserialize_net(bytes));
  CHECK(back == p);
  CHECK(back.rolldrop_p == 0.0001);

  NetSpec vs;
  vs.obs_size = 5;
  vs.action_size = 3;
  vs.hidden = {4, 4};
  RngStream rng(1, kLearnerStream, StreamId::Init);
  const ValueNet v = make_value(vs, rng);
  CHECK(std::get<ValueNet>(deserialize_net(serialize_net(v))) == v);

  SUBCASE("truncated payload") {
    for (std::size_t cut : {std::size_t(0), std::size_t(7), std::size_t(20), bytes.size() - 1}) {
      std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(deserialize_net(t), CorruptPayload);
    }
  }
  SUBCASE("wrong version") {
    auto b = bytes;
    b[8] = 99;
    CHECK_THROWS_AS(deserialize_net(b), CorruptPayload);
  }
  SUBCASE("file round trip") {
    test::TempDir dir("ckpt");
    save_net(dir / "p.bin", p);
    CHECK(load_policy(dir / "p.bin") == p);
    CHECK_THROWS_AS(load_value(dir / "p.bin"), CorruptPayload);
  }
}

TEST_CASE("blocked kernels match the per-sample reference bitwise") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RngStream rng(seed, 0, StreamId::Init);
    const Mlp net = make_mlp({69, 33, 17, 9, 4}, rng);
    const std::size_t rows = 13;
    std::vector<double> x(rows * 69), up(rows * 4), scale(rows * 17);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);
    for (double& v : up) v = rng.uniform(-1.0, 1.0);
    for (double& v : scale) v = rng.uniform() < 0.2 ? 0.0 : 1.25;

    for (bool scaled : {false, true}) {
      kernels::BatchTape bt;
      kernels::batch_forward(net, x, rows, bt, scaled ? std::span<const double>(scale) : std::span<const double>{},
                             2);
      std::vector<double> gb(net.param_count(), 0.0), gr(net.param_count(), 0.0);
      kernels::batch_backward(net, kernels::TransposedWeights::of(net), bt, up, gb);
      for (std::size_t r = 0; r < rows; ++r) {
        Tape t;
        UnitScale us{2, std::span<const double>(scale).subspan(r * 17, 17)};
        forward_cached(net, std::span<const double>(x).subspan(r * 69, 69), t, scaled ? &us : nullptr);
        const std::vector<double> out(bt.act.back().begin() + r * 4, bt.act.back().begin() + (r + 1) * 4);
        CHECK(test::bitwise_equal(out, t.activations.back()));
        backward_into(net, t, std::span<const double>(up).subspan(r * 4, 4), gr);
      }
      CHECK(test::bitwise_equal(gb, gr));
    }
  }
}
