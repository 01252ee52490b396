#pragma once

#include <cstdint>
#include <string_view>

namespace rolldrop {

// Independent random streams. A draw is a pure function of
// (master seed, env id, stream id, counter), so the order in which parallel
// workers consume their streams can never change the numbers they see.
enum class StreamId : std::uint32_t {
  ActionNoise = 0,
  Dropout = 1,
  EnvReset = 2,
  Terrain = 3,
  ObsNoise = 4,
  Init = 5,
  Shuffle = 6,
  TrainDropout = 7,
};

std::string_view to_string(StreamId id);

// Env id used by streams that belong to the learner rather than an env.
inline constexpr std::uint32_t kLearnerStream = 0xFFFFFFFFu;

// Philox4x32-10 keyed by the master seed; the counter block carries
// (counter, env id, stream id).
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::uint32_t env_id, StreamId stream,
            std::uint64_t counter = 0)
      : seed_(master_seed), env_id_(env_id), stream_(stream), counter_(counter) {}

  std::uint64_t master_seed() const { return seed_; }
  std::uint32_t env_id() const { return env_id_; }
  StreamId stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t counter) { counter_ = counter; }
  void skip(std::uint64_t n) { counter_ += n; }

  // Raw 64-bit draw at an arbitrary counter; does not advance.
  std::uint64_t at(std::uint64_t counter) const;

  std::uint64_t next_u64() { return at(counter_++); }
  // [0, 1) with 53 random bits. One draw.
  double uniform();
  // [lo, hi). One draw.
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller. Always two draws.
  double normal();

 private:
  std::uint64_t seed_ = 0;
  std::uint32_t env_id_ = 0;
  StreamId stream_ = StreamId::ActionNoise;
  std::uint64_t counter_ = 0;
};

}  // namespace rolldrop
