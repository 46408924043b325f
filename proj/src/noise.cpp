#include "xbarvit/noise.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace xbarvit {

void NoiseSpec::validate() const {
  if (sigma_r < 0.0 || sigma_w < 0.0 || gamma < 0.0)
    throw std::invalid_argument("NoiseSpec: sigma_r, sigma_w and gamma must be non-negative");
}

NoiseSpec NoiseSpec::from_config(const CrossbarConfig& cfg, std::uint64_t seed) {
  NoiseSpec s;
  s.sigma_r = cfg.sigma_r;
  s.sigma_w = cfg.sigma_w;
  s.gamma = cfg.gamma;
  s.apply_read = true;
  s.apply_write = true;
  s.seed = seed;
  return s;
}

double write_noise_delta(double g, double z, const NoiseSpec& spec, const CrossbarConfig& cfg) {
  if (g < cfg.g_min) throw std::domain_error("write noise: conductance below g_min");
  return spec.gamma * std::sqrt((g - cfg.g_min) * (cfg.g_max - cfg.g_min)) * spec.sigma_w * z;
}

Matrix apply_read_noise(const Matrix& g, const NoiseSpec& spec, const CrossbarConfig& /*cfg*/) {
  spec.validate();
  Matrix out = g;
  if (!spec.reads()) return out;
  std::vector<double> z(out.size());
  spec.gaussian().fill(0, z);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * (1.0 + spec.sigma_r * z[i]);
  return out;
}

Matrix apply_write_noise(const Matrix& g, const NoiseSpec& spec, const CrossbarConfig& cfg) {
  spec.validate();
  Matrix out = g;
  if (!spec.apply_write) return out;
  std::vector<double> z(out.size());
  spec.gaussian().fill(0, z);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += write_noise_delta(v[i], z[i], spec, cfg);
  return out;
}

double predicted_read_perturbation(double w, double w_max, const CrossbarConfig& cfg) {
  const double ratio = cfg.on_off_ratio();
  if (!(ratio > 1.0)) throw std::invalid_argument("predicted_read_perturbation: on/off ratio must exceed 1");
  return cfg.sigma_r * (w + w_max / (ratio - 1.0));
}

double predicted_write_perturbation(double w, double w_max, const NoiseSpec& spec) {
  return spec.gamma * spec.sigma_w * std::sqrt(w_max * w);
}

}  // namespace xbarvit
