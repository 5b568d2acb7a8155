#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fastpfrec/rng.hpp"

namespace fastpfrec {

struct LdpConfig {
  double lambda = 0.1;  // Laplace scale; 0 disables the mechanism
  void validate() const;
};

// Adds an independent Laplace(0, lambda) draw to every coordinate of the
// upload. lambda == 0 returns the input unchanged and draws nothing.
std::vector<double> add_laplace_noise(std::span<const double> params,
                                      const LdpConfig& config, Rng& rng);

void add_laplace_noise_inplace(std::span<double> params, const LdpConfig& config,
                               Rng& rng);

}  // namespace fastpfrec
