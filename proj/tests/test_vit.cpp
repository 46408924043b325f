#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "test_util.hpp"
#include "xbarvit/experiment.hpp"
#include "xbarvit/hw_estimator.hpp"
#include "xbarvit/vit.hpp"

using namespace xbarvit;
using xbarvit::testing::Gen;
using xbarvit::testing::max_abs_diff;

namespace {

const ModelConfig kSmall{2, 8, 16, 2, 2.0};

CrossbarConfig ideal_adc() {
  CrossbarConfig cfg;
  cfg.ideal_adc = true;
  return cfg;
}

Matrix qdq_input(const Matrix& x) { return quantize_observed(x, 8).dequantized(); }
Matrix qdq_weight(const Matrix& w, const CrossbarConfig& cfg) { return decode_signed(encode_signed(w, cfg), cfg); }

// Noise-free attention rebuilt from dequantized operands and plain matmuls.
Matrix attention_oracle(const Matrix& x, const EncoderWeights& w, const ModelConfig& m, const CrossbarConfig& cfg) {
  const Matrix xq = qdq_input(x);
  const Matrix q = matmul(xq, qdq_weight(w.w_q, cfg));
  const Matrix k = matmul(xq, qdq_weight(w.w_k, cfg));
  const Matrix v = matmul(xq, qdq_weight(w.w_v, cfg));
  const auto t = static_cast<std::size_t>(m.tokens);
  const auto hd = static_cast<std::size_t>(m.head_dim());
  Matrix out(t, static_cast<std::size_t>(m.embed_dim));
  for (int h = 0; h < m.n_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * hd;
    const Matrix s = matmul(qdq_input(q.block(0, c0, t, hd)), qdq_weight(k.block(0, c0, t, hd).transposed(), cfg));
    const Matrix a = softmax_rows((1.0 / std::sqrt(static_cast<double>(hd))) * s);
    out.set_block(0, c0, matmul(qdq_input(a), qdq_weight(v.block(0, c0, t, hd), cfg)));
  }
  return out;
}

Matrix encoder_oracle(const Matrix& x, const EncoderWeights& w, const ModelConfig& m, const CrossbarConfig& cfg) {
  const Matrix a = attention_oracle(layernorm(x, w.ln1_gain, w.ln1_bias), w, m, cfg);
  const Matrix x1 = x + matmul(qdq_input(a), qdq_weight(w.w_proj, cfg));
  const Matrix h = gelu(matmul(qdq_input(layernorm(x1, w.ln2_gain, w.ln2_bias)), qdq_weight(w.mlp_1, cfg)));
  return x1 + matmul(qdq_input(h), qdq_weight(w.mlp_2, cfg));
}

Matrix permute_rows(const Matrix& x, const std::vector<std::size_t>& perm) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(perm[i], j);
  return out;
}

double rel_diff(const Matrix& a, const Matrix& b) { return max_abs_diff(a, b) / std::max(1e-300, b.max_abs()); }

InferenceStats without_draws(InferenceStats s) {
  for (auto& c : s.by_class) c.n_write_draws = 0;
  return s;
}

}  // namespace

TEST_SUITE("vit-pipeline") {

TEST_CASE("single token attention returns the value row") {
  ModelConfig m = kSmall;
  m.tokens = 1;
  const Model model = generate_synthetic_model(m, 3);
  const CrossbarConfig cfg;
  const DeployedModel dep = deploy(model, cfg);
  Gen gen(50);
  const Matrix x = gen.gaussian(1, 16);
  const AttentionResult r = attention_block(x, dep.encoders[0], m, cfg, std::nullopt, NoiseSpec::none());
  const Matrix v = mvm(x, dep.encoders[0].v, cfg, NoiseSpec::none()).out;
  const auto hd = static_cast<std::size_t>(m.head_dim());
  for (int h = 0; h < m.n_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * hd;
    CHECK(rel_diff(r.probe.x.block(0, c0, 1, hd), qdq_weight(v.block(0, c0, 1, hd), cfg)) < 1e-12);
  }
}

TEST_CASE("noise-free attention and encoder match the dequantized oracle") {
  const CrossbarConfig cfg = ideal_adc();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Model model = generate_synthetic_model(kSmall, seed);
    const DeployedModel dep = deploy(model, cfg);
    const Matrix x = generate_inputs(kSmall, seed, 1)[0];
    const AttentionResult a = attention_block(x, dep.encoders[0], kSmall, cfg, std::nullopt, NoiseSpec::none());
    CHECK(rel_diff(a.out, attention_oracle(x, model.encoders[0], kSmall, cfg)) < 1e-9);
    const EncoderResult e = encoder_forward(x, dep.encoders[1], kSmall, cfg, std::nullopt, NoiseSpec::none());
    CHECK(rel_diff(e.out, encoder_oracle(x, model.encoders[1], kSmall, cfg)) < 1e-9);
  }
}

TEST_CASE("attention is equivariant under token permutation") {
  const CrossbarConfig cfg = ideal_adc();
  const Model model = generate_synthetic_model(kSmall, 4);
  const DeployedModel dep = deploy(model, cfg);
  const Matrix x = generate_inputs(kSmall, 4, 1)[0];
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  Gen gen(51);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(gen.integer(0, 1 << 30)));
    const Matrix base = attention_block(x, dep.encoders[0], kSmall, cfg, std::nullopt, NoiseSpec::none()).out;
    const Matrix moved =
        attention_block(permute_rows(x, perm), dep.encoders[0], kSmall, cfg, std::nullopt, NoiseSpec::none()).out;
    CHECK(rel_diff(moved, permute_rows(base, perm)) < 1e-9);
  }
}

TEST_CASE("zero weights pass the residual stream through") {
  Model model = generate_synthetic_model(kSmall, 5);
  for (auto& e : model.encoders)
    for (Matrix* w : {&e.w_q, &e.w_k, &e.w_v, &e.w_proj, &e.mlp_1, &e.mlp_2}) *w = Matrix(w->rows(), w->cols());
  const CrossbarConfig cfg;
  const DeployedModel dep = deploy(model, cfg);
  const Matrix x = generate_inputs(kSmall, 5, 1)[0];
  NoiseSpec noise = NoiseSpec::from_config(cfg, 1);
  CHECK_THROWS_AS(run_inference({x}, dep, std::nullopt, noise), std::domain_error);
  // Write noise vanishes at g_min; read noise would not.
  noise.apply_read = false;
  const EncoderResult r = encoder_forward(x, dep.encoders[0], kSmall, cfg, ClipParams{1.0, 1.0}, noise);
  CHECK(r.out == x);
  CHECK(r.probe.x == Matrix(8, 16));
}

TEST_CASE("write noise touches only the per-input operands") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 6);
  const DeployedModel dep = deploy(model, cfg);
  const Matrix x = generate_inputs(kSmall, 6, 1)[0];
  const NoiseSpec noise = NoiseSpec::from_config(cfg, 2);
  for (const auto& clip : {std::optional<ClipParams>{}, std::optional<ClipParams>{ClipParams{1.0, 0.25}}}) {
    const EncoderResult r = encoder_forward(x, dep.encoders[0], kSmall, cfg, clip, noise);
    for (OperandClass c : {OperandClass::kQkv, OperandClass::kProjection, OperandClass::kMlp}) {
      CHECK(r.stats[c].n_write_draws == 0);
      CHECK(r.stats[c].n_write_events == 0);
    }
    for (OperandClass c : {OperandClass::kKeyT, OperandClass::kValue}) {
      CHECK(r.stats[c].n_write_draws > 0);
      CHECK(r.stats[c].n_write_events > 0);
    }
    CHECK(r.probe.kv_tiles_without_draws == 0);
    CHECK(r.probe.kv_tiles_written > 0);
  }
  // Stationary operands were programmed without any noise.
  for (const auto& enc : dep.encoders)
    for (const MappedOperand* op : {&enc.q, &enc.k, &enc.v, &enc.proj, &enc.mlp_1, &enc.mlp_2}) {
      CHECK(op->write_stats.n_write_draws == 0);
      for (const auto& t : op->tiles) CHECK(t.write_delta[0].empty());
    }
}

TEST_CASE("every input draws fresh noise") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 7);
  const DeployedModel dep = deploy(model, cfg);
  const Matrix x = generate_inputs(kSmall, 7, 1)[0];
  NoiseSpec noise = NoiseSpec::from_config(cfg, 3);
  const InferenceReport both = run_inference({x, x}, dep, std::nullopt, noise);
  CHECK(both.outputs[0] != both.outputs[1]);
  noise.apply_read = false;
  const InferenceReport write_only = run_inference({x, x}, dep, std::nullopt, noise);
  CHECK(write_only.outputs[0] != write_only.outputs[1]);
}

TEST_CASE("operand streams") {
  NoiseSpec base = NoiseSpec::from_config(CrossbarConfig{}, 1);
  const NoiseContext a{0, 2};
  const NoiseContext b{5, 2};
  for (int c = 0; c < kOperandClasses; ++c) {
    const auto cls = static_cast<OperandClass>(c);
    CHECK(operand_stream(base, a, cls, 0) != operand_stream(base, b, cls, 0));
    CHECK(operand_stream(base, a, cls, 0) != operand_stream(base, a, cls, 1));
  }
  base.freeze_read = true;
  for (OperandClass c : {OperandClass::kQkv, OperandClass::kProjection, OperandClass::kMlp})
    CHECK(operand_stream(base, a, c, 0) == operand_stream(base, b, c, 0));
  for (OperandClass c : {OperandClass::kKeyT, OperandClass::kValue})
    CHECK(operand_stream(base, a, c, 0) != operand_stream(base, b, c, 0));
  CHECK(operand_stream(base, a, OperandClass::kQkv, 0) != operand_stream(base, {0, 3}, OperandClass::kQkv, 0));
}

TEST_CASE("run statistics equal the counted expectation") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 8);
  const DeployedModel dep = deploy(model, cfg);
  const auto inputs = generate_inputs(kSmall, 8, 3);
  for (const auto& clip : {std::optional<ClipParams>{}, std::optional<ClipParams>{ClipParams{1.0, 0.25}},
                           std::optional<ClipParams>{ClipParams{1.0, 1.0}}}) {
    const InferenceReport r = run_inference(inputs, dep, clip, NoiseSpec::from_config(cfg, 1));
    CHECK(without_draws(r.stats) == expected_stats(kSmall, cfg, clip, 3));
    CHECK(r.n_inferences == 3);
  }
}

TEST_CASE("clipping bounds the programmed key and value conductance") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 9);
  const DeployedModel dep = deploy(model, cfg);
  const auto inputs = generate_inputs(kSmall, 9, 2);
  const NoiseSpec noise = NoiseSpec::from_config(cfg, 1);
  CHECK(run_inference(inputs, dep, ClipParams{1.0, 0.25}, noise).max_kv_conductance <= 2.5);
  CHECK(run_inference(inputs, dep, ClipParams{1.0, 1.0}, noise).max_kv_conductance <= 9.9 + 1e-12);
  CHECK(run_inference(inputs, dep, std::nullopt, noise).max_kv_conductance == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("noise-free unclipped runs report infinite SNR") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 10);
  const DeployedModel dep = deploy(model, cfg);
  const auto inputs = generate_inputs(kSmall, 10, 2);
  const InferenceReport clean = run_inference(inputs, dep, std::nullopt, NoiseSpec::none());
  for (double s : clean.snr.per_block_snr) CHECK(s == kSnrInfinite);
  CHECK(clean.snr.mean_snr == kSnrInfinite);
  const InferenceReport clipped = run_inference(inputs, dep, ClipParams{1.0, 0.25}, NoiseSpec::none());
  CHECK(std::isfinite(clipped.snr.mean_snr));
  const InferenceReport noisy = run_inference(inputs, dep, std::nullopt, NoiseSpec::from_config(cfg, 1));
  CHECK(std::isfinite(noisy.snr.mean_snr));
  CHECK(noisy.kv_write_perturbation_rms > 0.0);
}

TEST_CASE("snr identities") {
  Gen gen(52);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = gen.gaussian(4, 5);
    CHECK(compute_snr(x, x) == kSnrInfinite);
    CHECK(std::abs(compute_snr(x, Matrix(4, 5))) < 1e-12);
    CHECK(compute_snr(x, 1.5 * x) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-12));
    const Matrix y = x + gen.gaussian(4, 5, 0.1);
    const double a = gen.uniform(0.1, 10.0);
    CHECK(compute_snr(a * x, a * y) == doctest::Approx(compute_snr(x, y)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(compute_snr(Matrix(2, 2), Matrix(2, 2, 1.0)), std::domain_error);
  CHECK_THROWS_AS(compute_snr(Matrix(2, 2), Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("inference is deterministic for a fixed seed") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 11);
  const DeployedModel dep = deploy(model, cfg);
  const auto inputs = generate_inputs(kSmall, 11, 2);
  const NoiseSpec noise = NoiseSpec::from_config(cfg, 4);
  const InferenceReport a = run_inference(inputs, dep, ClipParams{1.0, 0.5}, noise);
  const InferenceReport b = run_inference(inputs, dep, ClipParams{1.0, 0.5}, noise);
  CHECK(a.outputs == b.outputs);
  CHECK(a.snr.per_input == b.snr.per_input);
  CHECK(a.stats == b.stats);
  const InferenceReport c = run_inference(inputs, dep, ClipParams{1.0, 0.5}, NoiseSpec::from_config(cfg, 5));
  CHECK(a.outputs != c.outputs);
}

TEST_CASE("block input shape is checked") {
  const CrossbarConfig cfg;
  const Model model = generate_synthetic_model(kSmall, 12);
  const DeployedModel dep = deploy(model, cfg);
  CHECK_THROWS_AS(attention_block(Matrix(7, 16), dep.encoders[0], kSmall, cfg, std::nullopt, NoiseSpec::none()),
                  std::invalid_argument);
}

TEST_CASE("strong write noise orders the clip settings" * doctest::timeout(300)) {
  ExperimentSpec spec;
  spec.gammas = {5.0};
  spec.clips = {std::nullopt, ClipParams{1.0, 1.0}, ClipParams{1.0, 0.25}};
  spec.on_off = {100.0};
  spec.seeds.clear();
  for (std::uint64_t s = 1; s <= 20; ++s) spec.seeds.push_back(s);
  spec.batch = 4;
  const ExperimentResult res = run_experiment(spec, load_model(spec));
  REQUIRE(res.ok());
  std::map<std::string, std::map<std::uint64_t, double>> snr;
  for (const auto& row : res.rows) snr[format_clip(row.point.clip)][row.point.seed] = row.mean_snr;
  int tight_wins = 0, clip_wins = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    tight_wins += snr["1:0.25"][s] >= snr["1:1"][s];
    clip_wins += snr["1:1"][s] >= snr["none"][s];
  }
  // One-sided sign test over 20 seeds, p < 0.01.
  CHECK(tight_wins >= 16);
  CHECK(clip_wins >= 16);
}

}  // TEST_SUITE
