#pragma once

// Stochastic device noise: multiplicative read noise G' = G(1 + n_R) and
// state-dependent write noise G' = G + gamma*sqrt((G-g_min)(g_max-g_min))*n_W,
// plus the closed-form weight-domain perturbation predictors.

#include <cstdint>

#include "xbarvit/mapping.hpp"
#include "xbarvit/matrix.hpp"
#include "xbarvit/philox.hpp"

namespace xbarvit {

struct NoiseSpec {
  double sigma_r = 0.0;
  double sigma_w = 0.0;
  double gamma = 0.0;
  bool apply_read = false;
  bool apply_write = false;
  // Reuse one read-noise realization for stationary weights across inferences.
  bool freeze_read = false;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  void validate() const;
  bool any() const { return reads() || writes(); }
  // True when the corresponding noise can actually perturb a conductance.
  bool reads() const { return apply_read && sigma_r > 0.0; }
  bool writes() const { return apply_write && sigma_w > 0.0 && gamma > 0.0; }

  NoiseSpec with_stream(std::uint64_t stream) const {
    NoiseSpec s = *this;
    s.stream_id = stream;
    return s;
  }
  GaussianStream gaussian() const { return {seed, stream_id}; }

  static NoiseSpec none() { return {}; }
  // Table parameters of `cfg` with both noise kinds enabled.
  static NoiseSpec from_config(const CrossbarConfig& cfg, std::uint64_t seed);
};

// Per-element primitives shared by the matrix operations and the crossbar engine.
inline double read_noise_delta(double g, double z, double sigma_r) { return g * sigma_r * z; }
double write_noise_delta(double g, double z, const NoiseSpec& spec, const CrossbarConfig& cfg);

Matrix apply_read_noise(const Matrix& g, const NoiseSpec& spec, const CrossbarConfig& cfg);
Matrix apply_write_noise(const Matrix& g, const NoiseSpec& spec, const CrossbarConfig& cfg);

// Standard deviation of the decoded weight perturbation under read noise.
double predicted_read_perturbation(double w, double w_max, const CrossbarConfig& cfg);
// Standard deviation of the decoded weight perturbation under write noise;
// independent of g_min and g_max.
double predicted_write_perturbation(double w, double w_max, const NoiseSpec& spec);

}  // namespace xbarvit
