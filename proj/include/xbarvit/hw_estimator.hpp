#pragma once

// Crossbar-count based area and energy model. E_R is charged per crossbar per
// read cycle (one input bit-plane), E_W per crossbar programmed for a dynamic
// operand, and every crossbar costs A_xbar including its peripherals.
//
// "Attention" totals cover the W_Q/W_K/W_V crossbars and the per-head K^T and
// V crossbars; projection and MLP appear in the breakdown only.

#include <array>
#include <cstdint>
#include <optional>

#include "xbarvit/mapping.hpp"
#include "xbarvit/vit.hpp"

namespace xbarvit {

struct CrossbarCounts {
  std::array<std::uint64_t, kOperandClasses> by_class{};

  std::uint64_t operator[](OperandClass c) const { return by_class[static_cast<int>(c)]; }
  std::uint64_t attention() const;
  std::uint64_t total() const;
};

CrossbarCounts count_crossbars(const ModelConfig& model, const CrossbarConfig& cfg,
                               const std::optional<ClipParams>& clip);

// Statistics a run_inference over `n_inferences` inputs produces, derived by counting.
InferenceStats expected_stats(const ModelConfig& model, const CrossbarConfig& cfg,
                              const std::optional<ClipParams>& clip, std::uint64_t n_inferences);

struct ClassBreakdown {
  std::uint64_t n_crossbars = 0;
  double area = 0.0;          // mm^2
  double read_energy = 0.0;   // pJ over the supplied stats
  double write_energy = 0.0;  // pJ over the supplied stats
};

struct HwReport {
  std::uint64_t n_crossbars = 0;        // attention crossbars
  double attention_area = 0.0;          // mm^2
  double attention_energy = 0.0;        // pJ over all inferences in the stats
  double energy_per_inference = 0.0;    // pJ
  std::uint64_t n_inferences = 0;
  std::uint64_t n_read_cycles = 0;      // attention classes
  std::uint64_t n_write_events = 0;     // attention classes
  std::array<ClassBreakdown, kOperandClasses> breakdown{};
  std::uint64_t all_crossbars = 0;      // every class, including projection and MLP
  double total_area = 0.0;
  double total_energy = 0.0;
};

HwReport estimate(const InferenceStats& stats, std::uint64_t n_inferences, const CrossbarConfig& cfg,
                  const ModelConfig& model, const std::optional<ClipParams>& clip);

// Relative reduction (a - b) / a.
double relative_reduction(double baseline, double improved);

}  // namespace xbarvit
