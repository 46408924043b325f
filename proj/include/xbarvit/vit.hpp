#pragma once

// Pre-LN multi-head-attention encoder stack executed through the crossbar
// engine. Stationary weights (W_Q, W_K, W_V, projection, MLP) see read noise
// only; the per-input K^T and V operands are re-programmed for every input and
// see write noise plus read noise, optionally after key/value clipping.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "xbarvit/engine.hpp"
#include "xbarvit/mapping.hpp"
#include "xbarvit/matrix.hpp"
#include "xbarvit/noise.hpp"

namespace xbarvit {

struct ModelConfig {
  int n_encoders = 4;
  int tokens = 16;
  int embed_dim = 64;
  int n_heads = 4;
  double mlp_ratio = 4.0;

  void validate() const;
  int head_dim() const { return embed_dim / n_heads; }
  int mlp_hidden() const;

  static ModelConfig deit_small() { return {12, 197, 384, 6, 4.0}; }
};

struct EncoderWeights {
  Matrix w_q, w_k, w_v;  // d x d
  Matrix w_proj;         // d x d
  Matrix mlp_1;          // d x hidden
  Matrix mlp_2;          // hidden x d
  Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d

  void validate(const ModelConfig& model) const;
};

struct Model {
  ModelConfig config;
  std::vector<EncoderWeights> encoders;
};

enum class OperandClass : int { kQkv = 0, kProjection, kMlp, kKeyT, kValue };
inline constexpr int kOperandClasses = 5;
const char* operand_class_name(OperandClass c);

struct InferenceStats {
  std::array<MvmStats, kOperandClasses> by_class{};

  MvmStats& operator[](OperandClass c) { return by_class[static_cast<int>(c)]; }
  const MvmStats& operator[](OperandClass c) const { return by_class[static_cast<int>(c)]; }
  MvmStats total() const;
  InferenceStats& operator+=(const InferenceStats& o);
  friend bool operator==(const InferenceStats&, const InferenceStats&) = default;
};

/// Stationary operands of one encoder, programmed once per deployment.
struct DeployedEncoder {
  const EncoderWeights* weights = nullptr;
  MappedOperand q, k, v, proj, mlp_1, mlp_2;
};

struct DeployedModel {
  ModelConfig config;
  CrossbarConfig crossbar;
  std::vector<DeployedEncoder> encoders;
};

// The model must outlive the returned deployment.
DeployedModel deploy(const Model& model, const CrossbarConfig& cfg);

/// Identifies one inference of one layer; used to derive noise streams.
struct NoiseContext {
  std::uint64_t inference = 0;
  std::uint64_t layer = 0;
};

std::uint64_t operand_stream(const NoiseSpec& base, const NoiseContext& ctx, OperandClass cls, int head);

struct AttentionProbe {
  Matrix x;  // concatenated S(QK^T)V of all heads, t x d
  double max_kv_conductance = 0.0;
  std::uint64_t kv_write_draws = 0;
  std::uint64_t kv_tiles_written = 0;
  std::uint64_t kv_tiles_without_draws = 0;
  double kv_write_perturbation_sq = 0.0;
  std::uint64_t kv_elements = 0;
};

struct AttentionResult {
  Matrix out;
  AttentionProbe probe;
  InferenceStats stats;
};

// `x` is the already layernormed block input.
AttentionResult attention_block(const Matrix& x, const DeployedEncoder& enc, const ModelConfig& model,
                                const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                                const NoiseSpec& noise, const NoiseContext& ctx = {});

struct EncoderResult {
  Matrix out;
  AttentionProbe probe;
  InferenceStats stats;
};

EncoderResult encoder_forward(const Matrix& x, const DeployedEncoder& enc, const ModelConfig& model,
                              const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                              const NoiseSpec& noise, const NoiseContext& ctx = {});

inline constexpr double kSnrInfinite = std::numeric_limits<double>::infinity();

// 10 log10(|X_ideal|^2 / |X_ideal - X_nonideal|^2) in dB with Frobenius norms;
// +inf when the two agree exactly.
double compute_snr(const Matrix& x_ideal, const Matrix& x_nonideal);

struct SnrReport {
  std::vector<double> per_block_snr;  // batch-averaged dB per attention block
  double mean_snr = 0.0;
  std::vector<std::vector<double>> per_input;  // [input][block]
};

/// Noise-free, unclipped pass over the same deployment; supplies X_ideal.
struct ReferenceTrace {
  std::vector<std::vector<Matrix>> block_outputs;  // [input][block]
  std::vector<Matrix> outputs;
};

ReferenceTrace reference_trace(const std::vector<Matrix>& inputs, const DeployedModel& model);

struct InferenceReport {
  std::vector<Matrix> outputs;
  SnrReport snr;
  InferenceStats stats;
  std::uint64_t n_inferences = 0;
  double max_kv_conductance = 0.0;
  std::uint64_t kv_tiles_without_draws = 0;
  // RMS of the decoded K/V write perturbation relative to each tensor's w_max.
  double kv_write_perturbation_rms = 0.0;
};

/// Runs every input through the stack. Input k draws its noise with
/// NoiseContext::inference = k, so K/V write noise is fresh per input.
InferenceReport run_inference(const std::vector<Matrix>& inputs, const DeployedModel& model,
                              const std::optional<ClipParams>& clip, const NoiseSpec& noise,
                              const ReferenceTrace* reference = nullptr);

}  // namespace xbarvit
