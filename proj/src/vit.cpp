#include "xbarvit/vit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace xbarvit {

namespace {

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string("weights: ") + name + " is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  if (!m.all_finite()) throw std::invalid_argument(std::string("weights: ") + name + " has non-finite values");
}

void record(InferenceStats& stats, OperandClass cls, const MvmStats& s) { stats[cls] += s; }

}  // namespace

void ModelConfig::validate() const {
  if (n_encoders < 1 || tokens < 1 || embed_dim < 1 || n_heads < 1)
    throw std::invalid_argument("ModelConfig: all counts must be >= 1");
  if (embed_dim % n_heads != 0) throw std::invalid_argument("ModelConfig: embed_dim must be divisible by n_heads");
  if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) throw std::invalid_argument("ModelConfig: mlp_ratio must be positive");
}

int ModelConfig::mlp_hidden() const { return static_cast<int>(std::lround(mlp_ratio * embed_dim)); }

void EncoderWeights::validate(const ModelConfig& model) const {
  const auto d = static_cast<std::size_t>(model.embed_dim);
  const auto h = static_cast<std::size_t>(model.mlp_hidden());
  require_shape(w_q, d, d, "w_q");
  require_shape(w_k, d, d, "w_k");
  require_shape(w_v, d, d, "w_v");
  require_shape(w_proj, d, d, "w_proj");
  require_shape(mlp_1, d, h, "mlp_1");
  require_shape(mlp_2, h, d, "mlp_2");
  require_shape(ln1_gain, 1, d, "ln1_gain");
  require_shape(ln1_bias, 1, d, "ln1_bias");
  require_shape(ln2_gain, 1, d, "ln2_gain");
  require_shape(ln2_bias, 1, d, "ln2_bias");
}

const char* operand_class_name(OperandClass c) {
  switch (c) {
    case OperandClass::kQkv: return "qkv";
    case OperandClass::kProjection: return "proj";
    case OperandClass::kMlp: return "mlp";
    case OperandClass::kKeyT: return "key_t";
    case OperandClass::kValue: return "value";
  }
  return "?";
}

MvmStats InferenceStats::total() const {
  MvmStats t;
  for (const auto& s : by_class) t += s;
  return t;
}

InferenceStats& InferenceStats::operator+=(const InferenceStats& o) {
  for (int i = 0; i < kOperandClasses; ++i) by_class[i] += o.by_class[i];
  return *this;
}

DeployedModel deploy(const Model& model, const CrossbarConfig& cfg) {
  model.config.validate();
  cfg.validate();
  if (model.encoders.size() != static_cast<std::size_t>(model.config.n_encoders))
    throw std::invalid_argument("deploy: encoder count does not match the model config");
  DeployedModel out;
  out.config = model.config;
  out.crossbar = cfg;
  const NoiseSpec none = NoiseSpec::none();
  for (const auto& w : model.encoders) {
    w.validate(model.config);
    DeployedEncoder e;
    e.weights = &w;
    e.q = map_operand(w.w_q, cfg, std::nullopt, false, none);
    e.k = map_operand(w.w_k, cfg, std::nullopt, false, none);
    e.v = map_operand(w.w_v, cfg, std::nullopt, false, none);
    e.proj = map_operand(w.w_proj, cfg, std::nullopt, false, none);
    e.mlp_1 = map_operand(w.mlp_1, cfg, std::nullopt, false, none);
    e.mlp_2 = map_operand(w.mlp_2, cfg, std::nullopt, false, none);
    out.encoders.push_back(std::move(e));
  }
  return out;
}

std::uint64_t operand_stream(const NoiseSpec& base, const NoiseContext& ctx, OperandClass cls, int head) {
  const bool stationary = cls == OperandClass::kQkv || cls == OperandClass::kProjection || cls == OperandClass::kMlp;
  const std::uint64_t inference = stationary && base.freeze_read ? 0 : ctx.inference + 1;
  std::uint64_t s = combine_stream(base.stream_id, inference);
  s = combine_stream(s, ctx.layer);
  s = combine_stream(s, static_cast<std::uint64_t>(cls));
  return combine_stream(s, static_cast<std::uint64_t>(head));
}

AttentionResult attention_block(const Matrix& x, const DeployedEncoder& enc, const ModelConfig& model,
                                const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                                const NoiseSpec& noise, const NoiseContext& ctx) {
  const auto t = static_cast<std::size_t>(model.tokens);
  const auto d = static_cast<std::size_t>(model.embed_dim);
  const auto hd = static_cast<std::size_t>(model.head_dim());
  if (x.rows() != t || x.cols() != d) {
    throw std::invalid_argument("attention_block: input is " + std::to_string(x.rows()) + "x" +
                                std::to_string(x.cols()) + ", expected " + std::to_string(t) + "x" +
                                std::to_string(d));
  }
  if (clip) clip->validate();

  AttentionResult res;
  // Index 0..2 distinguish W_Q, W_K, W_V inside the qkv class.
  auto project = [&](const MappedOperand& op, int which) {
    auto r = mvm(x, op, cfg, noise.with_stream(operand_stream(noise, ctx, OperandClass::kQkv, which)));
    record(res.stats, OperandClass::kQkv, r.stats);
    return std::move(r.out);
  };
  const Matrix q = project(enc.q, 0);
  const Matrix k = project(enc.k, 1);
  const Matrix v = project(enc.v, 2);

  AttentionProbe& probe = res.probe;
  probe.x = Matrix(t, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  for (int h = 0; h < model.n_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * hd;
    const Matrix qh = q.block(0, c0, t, hd);
    const Matrix kt = k.block(0, c0, t, hd).transposed();
    const Matrix vh = v.block(0, c0, t, hd);

    const NoiseSpec key_noise = noise.with_stream(operand_stream(noise, ctx, OperandClass::kKeyT, h));
    const MappedOperand key_op = map_operand(kt, cfg, clip, true, key_noise);
    auto scores = mvm(qh, key_op, cfg, key_noise);
    record(res.stats, OperandClass::kKeyT, key_op.write_stats);
    record(res.stats, OperandClass::kKeyT, scores.stats);

    const Matrix attn = softmax_rows(scale * scores.out);

    const NoiseSpec value_noise = noise.with_stream(operand_stream(noise, ctx, OperandClass::kValue, h));
    const MappedOperand value_op = map_operand(vh, cfg, clip, true, value_noise);
    auto head_out = mvm(attn, value_op, cfg, value_noise);
    record(res.stats, OperandClass::kValue, value_op.write_stats);
    record(res.stats, OperandClass::kValue, head_out.stats);

    probe.x.set_block(0, c0, head_out.out);
    for (const MappedOperand* op : {&key_op, &value_op}) {
      probe.max_kv_conductance = std::max(probe.max_kv_conductance, op->max_conductance);
      probe.kv_write_draws += op->write_stats.n_write_draws;
      probe.kv_tiles_written += op->tiles.size();
      if (op->write_stats.n_write_draws == 0) probe.kv_tiles_without_draws += op->tiles.size();
      probe.kv_write_perturbation_sq += op->write_perturbation_sq;
      probe.kv_elements += op->rows * op->cols;
    }
  }
  res.out = probe.x;
  return res;
}

EncoderResult encoder_forward(const Matrix& x, const DeployedEncoder& enc, const ModelConfig& model,
                              const CrossbarConfig& cfg, const std::optional<ClipParams>& clip,
                              const NoiseSpec& noise, const NoiseContext& ctx) {
  const EncoderWeights& w = *enc.weights;
  EncoderResult res;

  AttentionResult attn = attention_block(layernorm(x, w.ln1_gain, w.ln1_bias), enc, model, cfg, clip, noise, ctx);
  res.stats += attn.stats;

  auto run = [&](const Matrix& in, const MappedOperand& op, OperandClass cls, int which) {
    auto r = mvm(in, op, cfg, noise.with_stream(operand_stream(noise, ctx, cls, which)));
    record(res.stats, cls, r.stats);
    return std::move(r.out);
  };
  const Matrix x1 = x + run(attn.out, enc.proj, OperandClass::kProjection, 0);
  const Matrix hidden = gelu(run(layernorm(x1, w.ln2_gain, w.ln2_bias), enc.mlp_1, OperandClass::kMlp, 0));
  res.out = x1 + run(hidden, enc.mlp_2, OperandClass::kMlp, 1);
  res.probe = std::move(attn.probe);
  return res;
}

double compute_snr(const Matrix& x_ideal, const Matrix& x_nonideal) {
  if (x_ideal.rows() != x_nonideal.rows() || x_ideal.cols() != x_nonideal.cols())
    throw std::invalid_argument("compute_snr: shape mismatch");
  double signal = 0.0;
  double error = 0.0;
  auto a = x_ideal.values();
  auto b = x_nonideal.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    signal += a[i] * a[i];
    const double e = a[i] - b[i];
    error += e * e;
  }
  if (signal == 0.0) throw std::domain_error("compute_snr: ideal signal is all zero");
  if (error == 0.0) return kSnrInfinite;
  return 10.0 * std::log10(signal / error);
}

ReferenceTrace reference_trace(const std::vector<Matrix>& inputs, const DeployedModel& model) {
  ReferenceTrace trace;
  const NoiseSpec none = NoiseSpec::none();
  for (const Matrix& input : inputs) {
    std::vector<Matrix> blocks;
    Matrix x = input;
    for (const auto& enc : model.encoders) {
      EncoderResult r = encoder_forward(x, enc, model.config, model.crossbar, std::nullopt, none);
      blocks.push_back(std::move(r.probe.x));
      x = std::move(r.out);
    }
    trace.block_outputs.push_back(std::move(blocks));
    trace.outputs.push_back(std::move(x));
  }
  return trace;
}

InferenceReport run_inference(const std::vector<Matrix>& inputs, const DeployedModel& model,
                              const std::optional<ClipParams>& clip, const NoiseSpec& noise,
                              const ReferenceTrace* reference) {
  noise.validate();
  if (clip) clip->validate();
  ReferenceTrace local;
  if (reference == nullptr) {
    local = reference_trace(inputs, model);
    reference = &local;
  }
  if (reference->block_outputs.size() != inputs.size())
    throw std::invalid_argument("run_inference: reference trace does not match the batch");

  const std::size_t n_blocks = model.encoders.size();
  InferenceReport report;
  report.n_inferences = inputs.size();
  report.snr.per_block_snr.assign(n_blocks, 0.0);
  double perturbation_sq = 0.0;
  std::uint64_t perturbation_n = 0;

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix x = inputs[i];
    std::vector<double> snr(n_blocks);
    for (std::size_t layer = 0; layer < n_blocks; ++layer) {
      const NoiseContext ctx{i, layer};
      EncoderResult r = encoder_forward(x, model.encoders[layer], model.config, model.crossbar, clip, noise, ctx);
      snr[layer] = compute_snr(reference->block_outputs[i][layer], r.probe.x);
      report.stats += r.stats;
      report.max_kv_conductance = std::max(report.max_kv_conductance, r.probe.max_kv_conductance);
      report.kv_tiles_without_draws += r.probe.kv_tiles_without_draws;
      perturbation_sq += r.probe.kv_write_perturbation_sq;
      perturbation_n += r.probe.kv_elements;
      x = std::move(r.out);
    }
    for (std::size_t b = 0; b < n_blocks; ++b) report.snr.per_block_snr[b] += snr[b];
    report.snr.per_input.push_back(std::move(snr));
    report.outputs.push_back(std::move(x));
  }
  double total = 0.0;
  for (double& s : report.snr.per_block_snr) {
    if (!inputs.empty()) s /= static_cast<double>(inputs.size());
    total += s;
  }
  report.snr.mean_snr = n_blocks ? total / static_cast<double>(n_blocks) : 0.0;
  if (perturbation_n > 0) report.kv_write_perturbation_rms = std::sqrt(perturbation_sq / static_cast<double>(perturbation_n));
  return report;
}

}  // namespace xbarvit
