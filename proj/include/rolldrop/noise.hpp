#pragma once

#include <span>
#include <vector>

#include "rolldrop/rng.hpp"

namespace rolldrop::harness {

// Largest accepted noise level (exclusive).
inline constexpr double kMaxNoiseLevel = 0.6;

void validate_noise_level(double n);

// s_i <- s_i * (1 + n * u_i), u_i ~ U(-1, 1). Always consumes obs.size()
// draws from `rng` (ObsNoise stream), also when n = 0.
std::vector<double> inject_noise(std::span<const double> obs, double n, RngStream& rng);

// Same model with caller-supplied u (one per component).
std::vector<double> inject_noise_with(std::span<const double> obs, double n, std::span<const double> u);

}  // namespace rolldrop::harness
