#include "rolldrop/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace rolldrop {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> c,
                                           std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

}  // namespace

std::string_view to_string(StreamId id) {
  switch (id) {
    case StreamId::ActionNoise: return "action_noise";
    case StreamId::Dropout: return "dropout";
    case StreamId::EnvReset: return "env_reset";
    case StreamId::Terrain: return "terrain";
    case StreamId::ObsNoise: return "obs_noise";
    case StreamId::Init: return "init";
    case StreamId::Shuffle: return "shuffle";
    case StreamId::TrainDropout: return "train_dropout";
  }
  return "unknown";
}

std::uint64_t RngStream::at(std::uint64_t counter) const {
  const std::array<std::uint32_t, 4> block = {
      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32), env_id_,
      static_cast<std::uint32_t>(stream_)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32_10(block, key);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rolldrop
