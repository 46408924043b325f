#include "xbarvit/hw_estimator.hpp"

#include <stdexcept>

namespace xbarvit {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t operand_crossbars(std::uint64_t rows, std::uint64_t cols, const CrossbarConfig& cfg, int slices) {
  return 2u * ceil_div(rows, static_cast<std::uint64_t>(cfg.tile_rows)) *
         ceil_div(cols, static_cast<std::uint64_t>(cfg.tile_cols)) * static_cast<std::uint64_t>(slices);
}

bool is_attention(OperandClass c) {
  return c == OperandClass::kQkv || c == OperandClass::kKeyT || c == OperandClass::kValue;
}

}  // namespace

std::uint64_t CrossbarCounts::attention() const {
  return (*this)[OperandClass::kQkv] + (*this)[OperandClass::kKeyT] + (*this)[OperandClass::kValue];
}

std::uint64_t CrossbarCounts::total() const {
  std::uint64_t t = 0;
  for (auto v : by_class) t += v;
  return t;
}

CrossbarCounts count_crossbars(const ModelConfig& model, const CrossbarConfig& cfg,
                               const std::optional<ClipParams>& clip) {
  model.validate();
  cfg.validate();
  const std::uint64_t d = static_cast<std::uint64_t>(model.embed_dim);
  const std::uint64_t h = static_cast<std::uint64_t>(model.mlp_hidden());
  const std::uint64_t t = static_cast<std::uint64_t>(model.tokens);
  const std::uint64_t hd = static_cast<std::uint64_t>(model.head_dim());
  const std::uint64_t heads = static_cast<std::uint64_t>(model.n_heads);
  const std::uint64_t enc = static_cast<std::uint64_t>(model.n_encoders);
  const int full = cfg.full_slices();
  const int dyn = required_slices(clip, cfg);

  CrossbarCounts c;
  auto& v = c.by_class;
  v[static_cast<int>(OperandClass::kQkv)] = enc * 3u * operand_crossbars(d, d, cfg, full);
  v[static_cast<int>(OperandClass::kProjection)] = enc * operand_crossbars(d, d, cfg, full);
  v[static_cast<int>(OperandClass::kMlp)] = enc * (operand_crossbars(d, h, cfg, full) + operand_crossbars(h, d, cfg, full));
  v[static_cast<int>(OperandClass::kKeyT)] = enc * heads * operand_crossbars(hd, t, cfg, dyn);
  v[static_cast<int>(OperandClass::kValue)] = enc * heads * operand_crossbars(t, hd, cfg, dyn);
  return c;
}

InferenceStats expected_stats(const ModelConfig& model, const CrossbarConfig& cfg,
                              const std::optional<ClipParams>& clip, std::uint64_t n_inferences) {
  const CrossbarCounts counts = count_crossbars(model, cfg, clip);
  const std::uint64_t t = static_cast<std::uint64_t>(model.tokens);
  const std::uint64_t bits = static_cast<std::uint64_t>(cfg.input_bits);
  const std::uint64_t heads = static_cast<std::uint64_t>(model.n_heads);
  const std::uint64_t enc = static_cast<std::uint64_t>(model.n_encoders);

  // Every operand is read once per inference by a t-row input.
  InferenceStats s;
  auto fill = [&](OperandClass cls, std::uint64_t input_calls) {
    MvmStats& m = s[cls];
    m.n_tiles = counts[cls] * n_inferences;
    m.n_read_cycles = counts[cls] * bits * t * n_inferences;
    m.n_input_rows = input_calls * t * n_inferences;
  };
  fill(OperandClass::kQkv, 3 * enc);
  fill(OperandClass::kProjection, enc);
  fill(OperandClass::kMlp, 2 * enc);
  fill(OperandClass::kKeyT, heads * enc);
  fill(OperandClass::kValue, heads * enc);
  s[OperandClass::kKeyT].n_write_events = counts[OperandClass::kKeyT] * n_inferences;
  s[OperandClass::kValue].n_write_events = counts[OperandClass::kValue] * n_inferences;
  return s;
}

HwReport estimate(const InferenceStats& stats, std::uint64_t n_inferences, const CrossbarConfig& cfg,
                  const ModelConfig& model, const std::optional<ClipParams>& clip) {
  if (n_inferences == 0 || stats.total().n_read_cycles == 0)
    throw std::invalid_argument("estimate: empty statistics");
  const CrossbarCounts counts = count_crossbars(model, cfg, clip);

  HwReport r;
  r.n_inferences = n_inferences;
  for (int i = 0; i < kOperandClasses; ++i) {
    const auto cls = static_cast<OperandClass>(i);
    ClassBreakdown& b = r.breakdown[i];
    b.n_crossbars = counts[cls];
    b.area = static_cast<double>(b.n_crossbars) * cfg.a_xbar;
    b.read_energy = static_cast<double>(stats[cls].n_read_cycles) * cfg.e_read;
    b.write_energy = static_cast<double>(stats[cls].n_write_events) * cfg.e_write;
    r.all_crossbars += b.n_crossbars;
    r.total_energy += b.read_energy + b.write_energy;
    if (is_attention(cls)) {
      r.n_read_cycles += stats[cls].n_read_cycles;
      r.n_write_events += stats[cls].n_write_events;
    }
  }
  r.n_crossbars = counts.attention();
  r.attention_area = static_cast<double>(r.n_crossbars) * cfg.a_xbar;
  r.attention_energy =
      static_cast<double>(r.n_read_cycles) * cfg.e_read + static_cast<double>(r.n_write_events) * cfg.e_write;
  r.energy_per_inference = r.attention_energy / static_cast<double>(n_inferences);
  r.total_area = static_cast<double>(r.all_crossbars) * cfg.a_xbar;
  return r;
}

double relative_reduction(double baseline, double improved) {
  if (baseline == 0.0) throw std::invalid_argument("relative_reduction: zero baseline");
  return (baseline - improved) / baseline;
}

}  // namespace xbarvit
