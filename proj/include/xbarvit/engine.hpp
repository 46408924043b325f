#pragma once

// Tiled non-ideal matrix-vector multiplication on bit-sliced crossbars.
//
// An operand W (rows x cols) is differential-encoded, optionally clipped,
// split into b_C-bit slices and partitioned into tile_rows x tile_cols tiles.
// Inputs are quantized per tensor to unsigned input_bits codes and streamed
// one bit-plane per read cycle; each column current is digitized by the ADC
// and shift-added across bit-planes and slices. The signed-input offset term
// is accumulated digitally from the tiles' column sums.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "xbarvit/mapping.hpp"
#include "xbarvit/matrix.hpp"
#include "xbarvit/noise.hpp"

namespace xbarvit {

struct MvmStats {
  std::uint64_t n_tiles = 0;         // physical crossbars read (tile x plane x slice)
  std::uint64_t n_read_cycles = 0;   // crossbar read cycles; one per crossbar per input bit-plane
  std::uint64_t n_write_events = 0;  // crossbars programmed for a dynamic operand
  std::uint64_t n_write_draws = 0;   // write-noise samples consumed
  std::uint64_t n_input_rows = 0;

  MvmStats& operator+=(const MvmStats& o);
  friend bool operator==(const MvmStats&, const MvmStats&) = default;
};

/// One logical tile position; both planes carry `n_slices` device matrices
/// covering [row_offset, row_offset + rows) x [col_offset, col_offset + cols).
struct TileStack {
  std::size_t row_offset = 0;
  std::size_t col_offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::array<SliceStack, 2> planes;  // 0 = positive, 1 = negative
  // Write-noise displacement of every device, uS. Empty for stationary tiles.
  std::array<std::vector<Matrix>, 2> write_delta;
  NoiseSpec noise_spec;
  bool is_dynamic = false;
};

struct MappedOperand {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double w_max = 1.0;
  int n_slices = 0;
  bool is_dynamic = false;
  std::vector<TileStack> tiles;
  MvmStats write_stats;  // write events and draws incurred by this mapping
  // Largest programmed plane conductance before write noise (uS).
  double max_conductance = 0.0;
  // Sum over elements of (decoded write perturbation / w_max)^2.
  double write_perturbation_sq = 0.0;

  std::uint64_t crossbars() const { return static_cast<std::uint64_t>(tiles.size()) * 2u * static_cast<std::uint64_t>(n_slices); }
};

MappedOperand map_operand(const Matrix& w, const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                          bool dynamic, const NoiseSpec& noise);

struct MvmResult {
  Matrix out;
  MvmStats stats;
};

/// `noise` selects the read-noise realization (its write fields are ignored;
/// write noise is frozen into the operand at mapping time).
MvmResult mvm(const Matrix& input, const MappedOperand& op, const CrossbarConfig& cfg, const NoiseSpec& noise,
              int workers = 1);

Matrix mvm_ideal(const Matrix& input, const Matrix& w);

// Stream tags separating the noise kinds drawn for one operand.
inline constexpr std::uint64_t kWriteNoiseTag = 0x57;
inline constexpr std::uint64_t kReadNoiseTag = 0x52;

}  // namespace xbarvit
