#pragma once

// Sweep driver: synthetic models and inputs, grid execution and report files.
//
// CSV columns, one row per sweep point in expand_grid order:
//   gamma, alpha, beta, on_off, seed, mean_snr, snr_block_0 .. snr_block_{L-1},
//   n_crossbars, attention_area, attention_energy, dww_rms, max_kv_g
// alpha and beta read "none" for the unclipped setting. The first line is a
// '#' comment carrying the generation timestamp.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "xbarvit/config.hpp"
#include "xbarvit/vit.hpp"

namespace xbarvit {

Model generate_synthetic_model(const ModelConfig& cfg, std::uint64_t seed);
// `batch` token matrices (tokens x embed_dim) with N(0, 1) entries.
std::vector<Matrix> generate_inputs(const ModelConfig& cfg, std::uint64_t seed, int batch);

// Weights file if one is configured, synthetic model otherwise.
Model load_model(const ExperimentSpec& spec);

struct ResultRow {
  SweepPoint point;
  std::vector<double> per_block_snr;
  double mean_snr = 0.0;
  std::uint64_t n_crossbars = 0;
  double attention_area = 0.0;    // mm^2
  double attention_energy = 0.0;  // pJ per inference
  double dww_rms = 0.0;           // RMS K/V write perturbation relative to w_max
  double max_kv_g = 0.0;          // uS
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // completed prefix of the grid
  int n_blocks = 0;
  std::string error;            // empty on success
  bool ok() const { return error.empty(); }
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const Model& model);

void write_csv(std::ostream& out, const ExperimentResult& result, const std::string& timestamp);
void write_summary_json(std::ostream& out, const ExperimentResult& result, const ExperimentSpec& spec);

// Runs the sweep and writes both report files (whatever completed, on error).
ExperimentResult run_experiment_to_files(const ExperimentSpec& spec);

// Shortest round-trip decimal; "inf" and "-inf" for infinities.
std::string format_number(double v);

}  // namespace xbarvit
