#include "xbarvit/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace xbarvit {

void CrossbarConfig::validate() const {
  if (!(g_min > 0.0) || !(g_max > g_min))
    throw std::invalid_argument("CrossbarConfig: require 0 < g_min < g_max");
  if (tile_rows < 1 || tile_cols < 1) throw std::invalid_argument("CrossbarConfig: tile size must be >= 1");
  if (bits_per_cell < 1 || bits_per_cell > 8)
    throw std::invalid_argument("CrossbarConfig: bits_per_cell must be in [1, 8]");
  if (weight_bits < 1 || weight_bits > 24 || weight_bits % bits_per_cell != 0)
    throw std::invalid_argument("CrossbarConfig: weight_bits must be a multiple of bits_per_cell");
  if (input_bits < 1 || input_bits > 24) throw std::invalid_argument("CrossbarConfig: input_bits must be in [1, 24]");
  if (!ideal_adc && (adc_bits < 1 || adc_bits > 30))
    throw std::invalid_argument("CrossbarConfig: adc_bits must be in [1, 30]");
  if (sigma_r < 0.0 || sigma_w < 0.0 || gamma < 0.0)
    throw std::invalid_argument("CrossbarConfig: noise parameters must be non-negative");
  if (e_read < 0.0 || e_write < 0.0 || a_xbar < 0.0)
    throw std::invalid_argument("CrossbarConfig: energies and area must be non-negative");
}

void ClipParams::validate() const {
  if (!(alpha >= 1.0)) throw std::invalid_argument("ClipParams: alpha must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("ClipParams: beta must be in (0, 1]");
}

double weight_to_conductance(double w, double w_max, const CrossbarConfig& cfg) {
  if (!(w_max > 0.0)) throw std::invalid_argument("weight_to_conductance: w_max must be positive");
  if (w < 0.0) throw std::invalid_argument("weight_to_conductance: negative weight, encode sign first");
  if (w > w_max * (1.0 + 1e-12)) throw std::invalid_argument("weight_to_conductance: weight exceeds w_max");
  return w * (cfg.g_max - cfg.g_min) / w_max + cfg.g_min;
}

double conductance_to_weight(double g, double w_max, const CrossbarConfig& cfg) {
  return (g - cfg.g_min) / (cfg.g_max - cfg.g_min) * w_max;
}

ConductancePlane encode_signed(const Matrix& w, const CrossbarConfig& cfg) {
  if (!w.all_finite()) throw std::invalid_argument("encode_signed: non-finite weight");
  ConductancePlane plane;
  plane.w_max = w.max_abs();
  if (plane.w_max == 0.0) plane.w_max = 1.0;
  plane.pos = Matrix(w.rows(), w.cols(), cfg.g_min);
  plane.neg = Matrix(w.rows(), w.cols(), cfg.g_min);
  const QuantSpec grid{cfg.weight_bits, cfg.g_min, cfg.g_max};
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      const double v = w(r, c);
      const double g = grid.value(grid.code(weight_to_conductance(std::abs(v), plane.w_max, cfg)));
      if (v > 0.0) plane.pos(r, c) = g;
      else if (v < 0.0) plane.neg(r, c) = g;
    }
  }
  return plane;
}

Matrix decode_signed(const ConductancePlane& plane, const CrossbarConfig& cfg) {
  Matrix out(plane.rows(), plane.cols());
  for (std::size_t r = 0; r < plane.rows(); ++r)
    for (std::size_t c = 0; c < plane.cols(); ++c)
      out(r, c) = conductance_to_weight(plane.pos(r, c), plane.w_max, cfg) -
                  conductance_to_weight(plane.neg(r, c), plane.w_max, cfg);
  return out;
}

std::int64_t SliceStack::code(std::size_t r, std::size_t c) const {
  std::int64_t sum = 0;
  for (std::size_t k = 0; k < levels.size(); ++k)
    sum += static_cast<std::int64_t>(levels[k](r, c)) * slice_weights[k];
  return sum;
}

std::int64_t conductance_code(double g, const CrossbarConfig& cfg) {
  return static_cast<std::int64_t>(std::round((g - cfg.g_min) / cfg.weight_step()));
}

SliceStack slice_conductances(const Matrix& plane, const CrossbarConfig& cfg, int n_slices) {
  if (n_slices < 1) throw std::invalid_argument("slice_conductances: need at least one slice");
  const int bc = cfg.bits_per_cell;
  const std::int64_t capacity = std::int64_t{1} << (n_slices * bc);
  const std::int64_t digit_mask = (std::int64_t{1} << bc) - 1;
  const double cell = cfg.cell_step();

  SliceStack stack;
  for (int k = 0; k < n_slices; ++k) {
    stack.slices.emplace_back(plane.rows(), plane.cols(), cfg.g_min);
    stack.levels.emplace_back(plane.rows(), plane.cols(), 0.0);
    stack.slice_weights.push_back(std::int64_t{1} << ((n_slices - 1 - k) * bc));
  }
  for (std::size_t r = 0; r < plane.rows(); ++r) {
    for (std::size_t c = 0; c < plane.cols(); ++c) {
      const std::int64_t code = conductance_code(plane(r, c), cfg);
      if (code < 0 || code >= capacity) {
        throw std::out_of_range("slice_conductances: code " + std::to_string(code) + " needs more than " +
                                std::to_string(n_slices * bc) + " bits");
      }
      for (int k = 0; k < n_slices; ++k) {
        const std::int64_t digit = (code >> ((n_slices - 1 - k) * bc)) & digit_mask;
        stack.levels[k](r, c) = static_cast<double>(digit);
        stack.slices[k](r, c) = cfg.g_min + static_cast<double>(digit) * cell;
      }
    }
  }
  return stack;
}

double clip_conductance(double g, const ClipParams& params, const CrossbarConfig& cfg) {
  g = std::max(g - params.alpha * cfg.g_min, cfg.g_min);
  // A ceiling below g_min would push devices off the programmable range.
  return std::min(g, std::max(params.beta * cfg.g_max, cfg.g_min));
}

ConductancePlane clipformer(const ConductancePlane& plane, const ClipParams& params,
                            const CrossbarConfig& cfg) {
  params.validate();
  ConductancePlane out = plane;
  for (double& g : out.pos.values()) g = clip_conductance(g, params, cfg);
  for (double& g : out.neg.values()) g = clip_conductance(g, params, cfg);
  return out;
}

int required_slices(const std::optional<ClipParams>& params, const CrossbarConfig& cfg) {
  // Clipping is monotone, so the clipped image of g_max is the ceiling.
  const double ceiling = params ? clip_conductance(cfg.g_max, *params, cfg) : cfg.g_max;
  const std::int64_t max_code = conductance_code(ceiling, cfg);
  int bits = 0;
  while ((std::int64_t{1} << bits) <= max_code) ++bits;
  const int n = (bits + cfg.bits_per_cell - 1) / cfg.bits_per_cell;
  return std::max(n, 1);
}

}  // namespace xbarvit
