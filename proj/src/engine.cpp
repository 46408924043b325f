#include "xbarvit/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace xbarvit {

MvmStats& MvmStats::operator+=(const MvmStats& o) {
  n_tiles += o.n_tiles;
  n_read_cycles += o.n_read_cycles;
  n_write_events += o.n_write_events;
  n_write_draws += o.n_write_draws;
  n_input_rows += o.n_input_rows;
  return *this;
}

namespace {

// Counter of one device, keyed by its global coordinate and bit significance
// so that differently tiled or sliced mappings of the same operand share draws.
std::uint64_t device_index(int plane, int significance, std::size_t r, std::size_t c, const MappedOperand& op) {
  const auto group = static_cast<std::uint64_t>(plane * 32 + significance);
  return (group * op.rows + r) * op.cols + c;
}

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    for (std::size_t w = 0; w < count; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// sum[t] += rows[i][t] over the listed rows, four rows per pass.
void accumulate_rows(const double* base, std::size_t stride, const std::vector<std::size_t>& rows,
                     double* __restrict sum) {
  std::size_t n = 0;
  for (; n + 4 <= rows.size(); n += 4) {
    const double* __restrict a = base + rows[n] * stride;
    const double* __restrict b = base + rows[n + 1] * stride;
    const double* __restrict c = base + rows[n + 2] * stride;
    const double* __restrict d = base + rows[n + 3] * stride;
    for (std::size_t t = 0; t < stride; ++t) sum[t] += (a[t] + b[t]) + (c[t] + d[t]);
  }
  for (; n < rows.size(); ++n) {
    const double* __restrict a = base + rows[n] * stride;
    for (std::size_t t = 0; t < stride; ++t) sum[t] += a[t];
  }
}

}  // namespace

MappedOperand map_operand(const Matrix& w, const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                          bool dynamic, const NoiseSpec& noise) {
  cfg.validate();
  noise.validate();
  const std::optional<ClipParams> applied = dynamic ? clip : std::nullopt;

  ConductancePlane plane = encode_signed(w, cfg);
  if (applied) plane = clipformer(plane, *applied, cfg);

  MappedOperand op;
  op.rows = w.rows();
  op.cols = w.cols();
  op.w_max = plane.w_max;
  op.is_dynamic = dynamic;
  op.n_slices = dynamic ? required_slices(applied, cfg) : cfg.full_slices();
  if (!plane.pos.empty()) op.max_conductance = std::max(plane.pos.max_value(), plane.neg.max_value());

  const std::array<SliceStack, 2> stacks = {slice_conductances(plane.pos, cfg, op.n_slices),
                                            slice_conductances(plane.neg, cfg, op.n_slices)};

  const auto tr = static_cast<std::size_t>(cfg.tile_rows);
  const auto tc = static_cast<std::size_t>(cfg.tile_cols);
  const bool write_noise = dynamic && noise.writes();
  const GaussianStream normal(noise.seed, combine_stream(noise.stream_id, kWriteNoiseTag));
  const double cell = cfg.cell_step();
  const double code_scale = 1.0 / static_cast<double>(cfg.weight_levels() - 1);

  // Decoded write perturbation per element, in units of w_max.
  Matrix perturbation;
  if (write_noise) perturbation = Matrix(op.rows, op.cols);

  for (std::size_t r0 = 0; r0 < op.rows; r0 += tr) {
    for (std::size_t c0 = 0; c0 < op.cols; c0 += tc) {
      TileStack tile;
      tile.row_offset = r0;
      tile.col_offset = c0;
      tile.rows = std::min(tr, op.rows - r0);
      tile.cols = std::min(tc, op.cols - c0);
      tile.is_dynamic = dynamic;
      tile.noise_spec = noise;
      for (int p = 0; p < 2; ++p) {
        SliceStack& dst = tile.planes[p];
        dst.slice_weights = stacks[p].slice_weights;
        for (int k = 0; k < op.n_slices; ++k) {
          dst.slices.push_back(stacks[p].slices[k].block(r0, c0, tile.rows, tile.cols));
          dst.levels.push_back(stacks[p].levels[k].block(r0, c0, tile.rows, tile.cols));
        }
        if (!write_noise) continue;
        for (int k = 0; k < op.n_slices; ++k) {
          const int significance = op.n_slices - 1 - k;
          const auto weight = static_cast<double>(dst.slice_weights[k]);
          Matrix delta(tile.rows, tile.cols);
          for (std::size_t i = 0; i < tile.rows; ++i) {
            auto drow = delta.row(i);
            normal.fill(device_index(p, significance, r0 + i, c0, op), drow);
            for (std::size_t j = 0; j < tile.cols; ++j) {
              drow[j] = write_noise_delta(dst.slices[k](i, j), drow[j], noise, cfg);
              const double dw = weight * drow[j] / cell * code_scale;
              perturbation(r0 + i, c0 + j) += p == 0 ? dw : -dw;
            }
          }
          tile.write_delta[p].push_back(std::move(delta));
          op.write_stats.n_write_draws += tile.rows * tile.cols;
        }
      }
      op.tiles.push_back(std::move(tile));
    }
  }
  if (dynamic) op.write_stats.n_write_events = op.crossbars();
  if (write_noise)
    for (double v : perturbation.values()) op.write_perturbation_sq += v * v;
  return op;
}

MvmResult mvm(const Matrix& input, const MappedOperand& op, const CrossbarConfig& cfg, const NoiseSpec& noise,
              int workers) {
  if (input.cols() != op.rows) {
    throw std::invalid_argument("mvm: input has " + std::to_string(input.cols()) + " columns, operand has " +
                                std::to_string(op.rows) + " rows");
  }
  if (op.rows > 0 && op.cols > 0 && op.tiles.empty()) throw std::invalid_argument("mvm: operand is not mapped");
  noise.validate();

  const QuantizedTensor qx = quantize_observed(input, cfg.input_bits);
  const std::size_t n_in = input.rows();
  const int n_slices = op.n_slices;
  const double cell = cfg.cell_step();
  const bool read_noise = noise.reads();
  const GaussianStream normal(noise.seed, combine_stream(noise.stream_id, kReadNoiseTag));

  const double full_scale = static_cast<double>(cfg.tile_rows) * cfg.g_max;
  const double adc_max = std::ldexp(1.0, cfg.adc_bits) - 1.0;
  const double to_code = adc_max / full_scale;
  const double from_code = full_scale / adc_max;
  // Column current -> ADC code -> level sum. Round half up after clamping.
  auto digitize = [&](double level_sum, double offset) {
    const double x = std::clamp((offset + cell * level_sum) * to_code, 0.0, adc_max);
    const auto q = static_cast<double>(static_cast<std::int64_t>(x + 0.5));
    return (q * from_code - offset) / cell;
  };

  Matrix acc(n_in, op.cols);
  std::vector<double> ones(op.cols, 0.0);

  // Tiles sharing a column range write disjoint outputs; each group is
  // accumulated in row-offset order, so any schedule gives the same sums.
  std::map<std::size_t, std::vector<const TileStack*>> groups;
  for (const auto& t : op.tiles) groups[t.col_offset].push_back(&t);
  std::vector<std::vector<const TileStack*>> column_groups;
  for (auto& [offset, tiles] : groups) {
    std::sort(tiles.begin(), tiles.end(),
              [](const TileStack* a, const TileStack* b) { return a->row_offset < b->row_offset; });
    column_groups.push_back(std::move(tiles));
  }

  const auto n_states = static_cast<std::size_t>(2 * n_slices);
  parallel_for(column_groups.size(), workers, [&](std::size_t g) {
    std::vector<std::size_t> active;
    std::vector<double> colsum;
    std::vector<double> state;
    std::vector<double> z;
    std::vector<double> weight(n_states);
    for (const TileStack* tile : column_groups[g]) {
      const std::size_t rows = tile->rows;
      const std::size_t cols = tile->cols;
      const std::size_t stride = n_states * cols;
      // Effective device states in cell-level units, digit + displacement / cell
      // step, laid out as state[i][plane * n_slices + slice][j].
      state.assign(rows * stride, 0.0);
      z.resize(cols);
      for (int p = 0; p < 2; ++p) {
        const SliceStack& stack = tile->planes[p];
        const bool written = !tile->write_delta[p].empty();
        for (int k = 0; k < n_slices; ++k) {
          const auto si = static_cast<std::size_t>(p * n_slices + k);
          weight[si] = static_cast<double>(stack.slice_weights[k]) * (p == 0 ? 1.0 : -1.0);
          const int significance = n_slices - 1 - k;
          for (std::size_t i = 0; i < rows; ++i) {
            double* dst = state.data() + i * stride + si * cols;
            auto level = stack.levels[k].row(i);
            if (!written && !read_noise) {
              std::copy(level.begin(), level.end(), dst);
              continue;
            }
            if (read_noise)
              normal.fill(device_index(p, significance, tile->row_offset + i, tile->col_offset, op), z);
            auto g_dev = stack.slices[k].row(i);
            for (std::size_t j = 0; j < cols; ++j) {
              const double dw = written ? tile->write_delta[p][k](i, j) : 0.0;
              double delta = dw;
              if (read_noise) delta += read_noise_delta(g_dev[j] + dw, z[j], noise.sigma_r);
              dst[j] = level[j] + delta / cell;
            }
          }
        }
      }

      // All-ones read for the signed-input offset term, accumulated digitally.
      colsum.assign(stride, 0.0);
      active.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) active[i] = i;
      accumulate_rows(state.data(), stride, active, colsum.data());
      for (std::size_t j = 0; j < cols; ++j) {
        double total = 0.0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(n_slices); ++k)
          total += weight[k] * (colsum[k * cols + j] - colsum[(k + static_cast<std::size_t>(n_slices)) * cols + j]);
        ones[tile->col_offset + j] += total;
      }

      for (std::size_t r = 0; r < n_in; ++r) {
        const std::int32_t* codes = qx.codes.data() + r * qx.cols + tile->row_offset;
        auto out = acc.row(r).subspan(tile->col_offset, cols);
        for (int b = 0; b < cfg.input_bits; ++b) {
          active.clear();
          for (std::size_t i = 0; i < rows; ++i)
            if ((codes[i] >> b) & 1) active.push_back(i);
          if (active.empty()) continue;
          std::fill(colsum.begin(), colsum.end(), 0.0);
          accumulate_rows(state.data(), stride, active, colsum.data());
          const double bit_weight = std::ldexp(1.0, b);
          const double offset = cfg.g_min * static_cast<double>(active.size());
          // Differential pair per slice: positive minus negative column.
          for (std::size_t k = 0; k < static_cast<std::size_t>(n_slices); ++k) {
            const double scale = bit_weight * weight[k];
            const double* pos = colsum.data() + k * cols;
            const double* neg = colsum.data() + (k + static_cast<std::size_t>(n_slices)) * cols;
            if (cfg.ideal_adc) {
              for (std::size_t j = 0; j < cols; ++j) out[j] += scale * (pos[j] - neg[j]);
            } else {
              for (std::size_t j = 0; j < cols; ++j) out[j] += scale * (digitize(pos[j], offset) - digitize(neg[j], offset));
            }
          }
        }
      }
    }
  });

  MvmResult result;
  result.out = Matrix(n_in, op.cols);
  const double weight_step = op.w_max / static_cast<double>(cfg.weight_levels() - 1);
  for (std::size_t r = 0; r < n_in; ++r)
    for (std::size_t c = 0; c < op.cols; ++c)
      result.out(r, c) = weight_step * (qx.step * acc(r, c) + qx.offset * ones[c]);

  result.stats.n_tiles = op.crossbars();
  result.stats.n_input_rows = n_in;
  result.stats.n_read_cycles = result.stats.n_tiles * static_cast<std::uint64_t>(cfg.input_bits) * n_in;
  return result;
}

Matrix mvm_ideal(const Matrix& input, const Matrix& w) { return matmul(input, w); }

}  // namespace xbarvit
