#include "fastpfrec/privacy.hpp"

#include <cmath>

#include "fastpfrec/errors.hpp"

namespace fastpfrec {

void LdpConfig::validate() const {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw ConfigError("ldp lambda must be finite and >= 0");
  }
}

void add_laplace_noise_inplace(std::span<double> params, const LdpConfig& config,
                               Rng& rng) {
  config.validate();
  if (config.lambda == 0.0) return;
  for (double& v : params) v += rng.laplace(config.lambda);
}

std::vector<double> add_laplace_noise(std::span<const double> params,
                                      const LdpConfig& config, Rng& rng) {
  std::vector<double> out(params.begin(), params.end());
  add_laplace_noise_inplace(out, config, rng);
  return out;
}

}  // namespace fastpfrec
