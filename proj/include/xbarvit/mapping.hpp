#pragma once

// Weight <-> conductance transforms, differential signed encoding, bit slicing
// and the key/value clipping transform.

#include <cstdint>
#include <optional>
#include <vector>

#include "xbarvit/matrix.hpp"

namespace xbarvit {

/// Hardware parameters of one RRAM crossbar and its peripherals.
/// Conductances in uS, energies in pJ, area in mm^2.
struct CrossbarConfig {
  double g_min = 0.1;
  double g_max = 10.0;
  int tile_rows = 64;
  int tile_cols = 64;
  int bits_per_cell = 2;
  int weight_bits = 8;
  int input_bits = 8;
  int adc_bits = 6;
  bool ideal_adc = false;  // lossless column readout, used by oracle tests
  double sigma_r = 0.05;
  double sigma_w = 0.1;
  double gamma = 4.0;
  double e_read = 25.0;
  double e_write = 118.0;
  double a_xbar = 0.03;

  void validate() const;
  double on_off_ratio() const { return g_max / g_min; }
  int full_slices() const { return weight_bits / bits_per_cell; }
  std::int64_t weight_levels() const { return std::int64_t{1} << weight_bits; }
  // Conductance distance between adjacent weight codes on the unclipped grid.
  double weight_step() const { return (g_max - g_min) / static_cast<double>(weight_levels() - 1); }
  // Conductance distance between adjacent levels of one multi-level cell.
  double cell_step() const { return (g_max - g_min) / static_cast<double>((1 << bits_per_cell) - 1); }
};

struct ClipParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
  friend bool operator==(const ClipParams&, const ClipParams&) = default;
};

double weight_to_conductance(double w, double w_max, const CrossbarConfig& cfg);
double conductance_to_weight(double g, double w_max, const CrossbarConfig& cfg);

/// Differential pair mapping of one signed tensor; both planes live in
/// [g_min, g_max] and at most one of them is above g_min per coordinate.
struct ConductancePlane {
  Matrix pos;
  Matrix neg;
  double w_max = 1.0;

  std::size_t rows() const { return pos.rows(); }
  std::size_t cols() const { return pos.cols(); }
};

ConductancePlane encode_signed(const Matrix& w, const CrossbarConfig& cfg);
// decode(pos) - decode(neg) with the linear inverse map.
Matrix decode_signed(const ConductancePlane& plane, const CrossbarConfig& cfg);

/// One conductance plane split into b_C-bit digits, most significant first.
struct SliceStack {
  std::vector<Matrix> slices;       // device conductances (uS)
  std::vector<Matrix> levels;       // digit value of each device (exact small integers)
  std::vector<std::int64_t> slice_weights;

  std::size_t count() const { return slices.size(); }
  // Weighted digit sum at (r, c), i.e. the integer code.
  std::int64_t code(std::size_t r, std::size_t c) const;
};

// Integer code of a conductance on the unclipped weight grid.
std::int64_t conductance_code(double g, const CrossbarConfig& cfg);

SliceStack slice_conductances(const Matrix& plane, const CrossbarConfig& cfg, int n_slices);

ConductancePlane clipformer(const ConductancePlane& plane, const ClipParams& params,
                            const CrossbarConfig& cfg);
double clip_conductance(double g, const ClipParams& params, const CrossbarConfig& cfg);

int required_slices(const std::optional<ClipParams>& params, const CrossbarConfig& cfg);

}  // namespace xbarvit
