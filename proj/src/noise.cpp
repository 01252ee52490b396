#include "rolldrop/noise.hpp"

#include <string>

#include "rolldrop/errors.hpp"

namespace rolldrop::harness {

void validate_noise_level(double n) {
  if (!(n >= 0.0 && n < kMaxNoiseLevel))
    throw ConfigError("noise level must lie in [0, 0.6), got " + std::to_string(n));
}

std::vector<double> inject_noise_with(std::span<const double> obs, double n, std::span<const double> u) {
  validate_noise_level(n);
  if (u.size() != obs.size()) throw ContractViolation("inject_noise: one draw per component required");
  std::vector<double> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i] = obs[i] * (1.0 + n * u[i]);
  return out;
}

std::vector<double> inject_noise(std::span<const double> obs, double n, RngStream& rng) {
  validate_noise_level(n);
  std::vector<double> u(obs.size());
  for (double& v : u) v = rng.uniform(-1.0, 1.0);
  return inject_noise_with(obs, n, u);
}

}  // namespace rolldrop::harness
