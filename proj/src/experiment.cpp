#include "xbarvit/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <ctime>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "xbarvit/hw_estimator.hpp"
#include "xbarvit/philox.hpp"
#include "xbarvit/tensor_file.hpp"

namespace xbarvit {

namespace {

constexpr double kInitStd = 0.02;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, const GaussianStream& g) {
  Matrix m(rows, cols);
  auto v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(scale * g(i));
  return m;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename F>
void parallel_indices(std::size_t n, int workers, F&& fn) {
  const std::size_t n_threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < n_threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

CrossbarConfig config_for(const ExperimentSpec& spec, double on_off, double gamma) {
  CrossbarConfig cfg = spec.crossbar;
  cfg.g_max = cfg.g_min * on_off;
  cfg.gamma = gamma;
  cfg.validate();
  return cfg;
}

std::uint64_t input_seed_for(const ExperimentSpec& spec, std::uint64_t seed) {
  return mix64(spec.input_seed ^ mix64(seed));
}

struct Slot {
  std::optional<ResultRow> row;
  std::string error;
};

}  // namespace

Model generate_synthetic_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const auto h = static_cast<std::size_t>(cfg.mlp_hidden());
  Model model;
  model.config = cfg;
  for (int i = 0; i < cfg.n_encoders; ++i) {
    auto stream = [&](std::uint64_t k) { return GaussianStream(seed, combine_stream(static_cast<std::uint64_t>(i), k)); };
    EncoderWeights e;
    e.w_q = gaussian_matrix(d, d, kInitStd, stream(0));
    e.w_k = gaussian_matrix(d, d, kInitStd, stream(1));
    e.w_v = gaussian_matrix(d, d, kInitStd, stream(2));
    e.w_proj = gaussian_matrix(d, d, kInitStd, stream(3));
    e.mlp_1 = gaussian_matrix(d, h, kInitStd, stream(4));
    e.mlp_2 = gaussian_matrix(h, d, kInitStd, stream(5));
    e.ln1_gain = Matrix(1, d, 1.0);
    e.ln1_bias = Matrix(1, d, 0.0);
    e.ln2_gain = Matrix(1, d, 1.0);
    e.ln2_bias = Matrix(1, d, 0.0);
    model.encoders.push_back(std::move(e));
  }
  return model;
}

std::vector<Matrix> generate_inputs(const ModelConfig& cfg, std::uint64_t seed, int batch) {
  cfg.validate();
  if (batch < 1) throw std::invalid_argument("generate_inputs: batch must be >= 1");
  std::vector<Matrix> out;
  for (int b = 0; b < batch; ++b)
    out.push_back(gaussian_matrix(static_cast<std::size_t>(cfg.tokens), static_cast<std::size_t>(cfg.embed_dim), 1.0,
                                  GaussianStream(seed, combine_stream(static_cast<std::uint64_t>(b), 0x1A))));
  return out;
}

Model load_model(const ExperimentSpec& spec) {
  if (spec.weights.empty()) return generate_synthetic_model(spec.model, spec.model_seed);
  return model_from_records(read_tensor_file(spec.weights), spec.model);
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const Model& model) {
  spec.validate();
  const std::vector<SweepPoint> grid = expand_grid(spec);
  ExperimentResult result;
  result.n_blocks = model.config.n_encoders;

  // One deployment per on/off ratio; gamma does not affect stationary mapping.
  const std::size_t n_ratio = spec.on_off.size();
  const std::size_t n_seed = spec.seeds.size();
  std::vector<DeployedModel> deployed;
  for (double r : spec.on_off) deployed.push_back(deploy(model, config_for(spec, r, spec.gammas.front())));

  std::vector<std::vector<Matrix>> inputs(n_seed);
  for (std::size_t s = 0; s < n_seed; ++s)
    inputs[s] = generate_inputs(model.config, input_seed_for(spec, spec.seeds[s]), spec.batch);

  std::vector<ReferenceTrace> refs(n_ratio * n_seed);
  std::vector<std::string> ref_errors(refs.size());
  parallel_indices(refs.size(), spec.workers, [&](std::size_t i) {
    try {
      refs[i] = reference_trace(inputs[i % n_seed], deployed[i / n_seed]);
    } catch (const std::exception& e) {
      ref_errors[i] = e.what();
    }
  });
  for (const auto& e : ref_errors)
    if (!e.empty()) {
      result.error = e;
      return result;
    }

  std::map<double, std::size_t> ratio_index;
  for (std::size_t i = 0; i < n_ratio; ++i) ratio_index.emplace(spec.on_off[i], i);
  std::map<std::uint64_t, std::size_t> seed_index;
  for (std::size_t i = 0; i < n_seed; ++i) seed_index.emplace(spec.seeds[i], i);

  std::vector<Slot> slots(grid.size());
  parallel_indices(grid.size(), spec.workers, [&](std::size_t i) {
    const SweepPoint& p = grid[i];
    try {
      const std::size_t ri = ratio_index.at(p.on_off);
      const std::size_t si = seed_index.at(p.seed);
      const DeployedModel& dm = deployed[ri];
      CrossbarConfig cfg = dm.crossbar;
      cfg.gamma = p.gamma;

      NoiseSpec noise = NoiseSpec::from_config(cfg, p.seed);
      noise.apply_read = spec.read_noise;
      noise.apply_write = spec.write_noise;
      noise.freeze_read = spec.freeze_read_noise;

      const InferenceReport rep = run_inference(inputs[si], dm, p.clip, noise, &refs[ri * n_seed + si]);
      const HwReport hw = estimate(rep.stats, rep.n_inferences, cfg, model.config, p.clip);

      ResultRow row;
      row.point = p;
      row.per_block_snr = rep.snr.per_block_snr;
      row.mean_snr = rep.snr.mean_snr;
      row.n_crossbars = hw.n_crossbars;
      row.attention_area = hw.attention_area;
      row.attention_energy = hw.energy_per_inference;
      row.dww_rms = rep.kv_write_perturbation_rms;
      row.max_kv_g = rep.max_kv_conductance;
      slots[i].row = std::move(row);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  for (auto& s : slots) {
    if (!s.row) {
      result.error = s.error.empty() ? "sweep point failed" : s.error;
      break;
    }
    result.rows.push_back(std::move(*s.row));
  }
  return result;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_number failed");
  return std::string(buf.data(), end);
}

void write_csv(std::ostream& out, const ExperimentResult& result, const std::string& timestamp) {
  out << "# xbarvit results generated " << timestamp << '\n';
  out << "gamma,alpha,beta,on_off,seed,mean_snr";
  for (int b = 0; b < result.n_blocks; ++b) out << ",snr_block_" << b;
  out << ",n_crossbars,attention_area,attention_energy,dww_rms,max_kv_g\n";
  for (const ResultRow& r : result.rows) {
    const auto& p = r.point;
    out << format_number(p.gamma) << ',' << (p.clip ? format_number(p.clip->alpha) : "none") << ','
        << (p.clip ? format_number(p.clip->beta) : "none") << ',' << format_number(p.on_off) << ',' << p.seed << ','
        << format_number(r.mean_snr);
    for (double s : r.per_block_snr) out << ',' << format_number(s);
    out << ',' << r.n_crossbars << ',' << format_number(r.attention_area) << ','
        << format_number(r.attention_energy) << ',' << format_number(r.dww_rms) << ','
        << format_number(r.max_kv_g) << '\n';
  }
}

namespace {

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

struct Accum {
  std::vector<const ResultRow*> rows;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  if (!std::isfinite(m)) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void write_summary_json(std::ostream& out, const ExperimentResult& result, const ExperimentSpec& spec) {
  // Group rows that differ only in seed, preserving first-appearance order.
  std::vector<std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : result.rows) {
    auto same = [&](const std::vector<const ResultRow*>& g) {
      const auto& q = g.front()->point;
      return q.gamma == r.point.gamma && q.clip == r.point.clip && q.on_off == r.point.on_off;
    };
    auto it = std::find_if(groups.begin(), groups.end(), same);
    if (it == groups.end()) {
      groups.push_back({&r});
    } else {
      it->push_back(&r);
    }
  }

  nlohmann::json points = nlohmann::json::array();
  for (const auto& g : groups) {
    const SweepPoint& p = g.front()->point;
    std::vector<double> snr, dww;
    for (const auto* r : g) {
      snr.push_back(r->mean_snr);
      dww.push_back(r->dww_rms);
    }
    nlohmann::json blocks = nlohmann::json::array();
    for (int b = 0; b < result.n_blocks; ++b) {
      std::vector<double> v;
      for (const auto* r : g) v.push_back(r->per_block_snr[static_cast<std::size_t>(b)]);
      blocks.push_back(json_number(mean_of(v)));
    }
    nlohmann::json j;
    j["gamma"] = p.gamma;
    j["alpha"] = p.clip ? nlohmann::json(p.clip->alpha) : nlohmann::json("none");
    j["beta"] = p.clip ? nlohmann::json(p.clip->beta) : nlohmann::json("none");
    j["on_off"] = p.on_off;
    j["n_seeds"] = g.size();
    j["mean_snr"] = json_number(mean_of(snr));
    j["std_snr"] = json_number(std_of(snr));
    j["snr_block_mean"] = std::move(blocks);
    j["n_crossbars"] = g.front()->n_crossbars;
    j["attention_area"] = g.front()->attention_area;
    j["attention_energy"] = g.front()->attention_energy;
    j["dww_rms_mean"] = mean_of(dww);
    points.push_back(std::move(j));
  }

  nlohmann::json doc;
  doc["model"] = {{"encoders", spec.model.n_encoders},
                  {"tokens", spec.model.tokens},
                  {"embed_dim", spec.model.embed_dim},
                  {"heads", spec.model.n_heads},
                  {"mlp_ratio", spec.model.mlp_ratio}};
  doc["batch"] = spec.batch;
  doc["rows"] = result.rows.size();
  doc["complete"] = result.ok();
  if (!result.ok()) doc["error"] = result.error;
  doc["points"] = std::move(points);
  out << doc.dump(2) << '\n';
}

ExperimentResult run_experiment_to_files(const ExperimentSpec& spec) {
  ExperimentResult result;
  try {
    const Model model = load_model(spec);
    result = run_experiment(spec, model);
  } catch (const std::exception& e) {
    result.error = e.what();
  }

  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));

  std::ofstream csv(spec.csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open " + spec.csv_path.string());
  write_csv(csv, result, stamp);
  std::ofstream json(spec.json_path, std::ios::trunc);
  if (!json) throw std::runtime_error("cannot open " + spec.json_path.string());
  write_summary_json(json, result, spec);
  return result;
}

}  // namespace xbarvit
