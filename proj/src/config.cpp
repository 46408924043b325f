#include "xbarvit/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <cstdio>

namespace xbarvit {

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message : source + ": " + message),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) items.push_back(trim(cur));
  return items;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::int64_t to_int(const std::string& s) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

int to_count(const std::string& s) {
  const auto v = to_int(s);
  if (v < 0 || v > 1'000'000'000) throw std::invalid_argument("value out of range: " + s);
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected an unsigned integer, got '" + s + "'");
  return v;
}

bool to_bool(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

std::optional<ClipParams> to_clip(const std::string& s) {
  if (s == "none") return std::nullopt;
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("clip entries are 'none' or 'alpha:beta', got '" + s + "'");
  ClipParams c{to_double(trim(s.substr(0, colon))), to_double(trim(s.substr(colon + 1)))};
  c.validate();
  return c;
}

std::vector<std::uint64_t> to_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_u64(item));
      continue;
    }
    const auto lo = to_u64(trim(item.substr(0, dots)));
    const auto hi = to_u64(trim(item.substr(dots + 2)));
    if (hi < lo || hi - lo > 1'000'000) throw std::invalid_argument("bad seed range '" + item + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F&& parse) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    if (item.empty()) throw std::invalid_argument("empty list entry");
    out.push_back(parse(item));
  }
  return out;
}

using Setter = std::function<void(ExperimentSpec&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.encoders", [](ExperimentSpec& s, const std::string& v) { s.model.n_encoders = to_count(v); }},
      {"model.tokens", [](ExperimentSpec& s, const std::string& v) { s.model.tokens = to_count(v); }},
      {"model.embed_dim", [](ExperimentSpec& s, const std::string& v) { s.model.embed_dim = to_count(v); }},
      {"model.heads", [](ExperimentSpec& s, const std::string& v) { s.model.n_heads = to_count(v); }},
      {"model.mlp_ratio", [](ExperimentSpec& s, const std::string& v) { s.model.mlp_ratio = to_double(v); }},
      {"model.seed", [](ExperimentSpec& s, const std::string& v) { s.model_seed = to_u64(v); }},
      {"model.weights", [](ExperimentSpec& s, const std::string& v) { s.weights = v; }},
      {"crossbar.g_min", [](ExperimentSpec& s, const std::string& v) { s.crossbar.g_min = to_double(v); }},
      {"crossbar.g_max", [](ExperimentSpec& s, const std::string& v) { s.crossbar.g_max = to_double(v); }},
      {"crossbar.tile_rows", [](ExperimentSpec& s, const std::string& v) { s.crossbar.tile_rows = to_count(v); }},
      {"crossbar.tile_cols", [](ExperimentSpec& s, const std::string& v) { s.crossbar.tile_cols = to_count(v); }},
      {"crossbar.bits_per_cell", [](ExperimentSpec& s, const std::string& v) { s.crossbar.bits_per_cell = to_count(v); }},
      {"crossbar.weight_bits", [](ExperimentSpec& s, const std::string& v) { s.crossbar.weight_bits = to_count(v); }},
      {"crossbar.input_bits", [](ExperimentSpec& s, const std::string& v) { s.crossbar.input_bits = to_count(v); }},
      {"crossbar.adc_bits", [](ExperimentSpec& s, const std::string& v) { s.crossbar.adc_bits = to_count(v); }},
      {"crossbar.ideal_adc", [](ExperimentSpec& s, const std::string& v) { s.crossbar.ideal_adc = to_bool(v); }},
      {"crossbar.sigma_r", [](ExperimentSpec& s, const std::string& v) { s.crossbar.sigma_r = to_double(v); }},
      {"crossbar.sigma_w", [](ExperimentSpec& s, const std::string& v) { s.crossbar.sigma_w = to_double(v); }},
      {"crossbar.e_read", [](ExperimentSpec& s, const std::string& v) { s.crossbar.e_read = to_double(v); }},
      {"crossbar.e_write", [](ExperimentSpec& s, const std::string& v) { s.crossbar.e_write = to_double(v); }},
      {"crossbar.a_xbar", [](ExperimentSpec& s, const std::string& v) { s.crossbar.a_xbar = to_double(v); }},
      {"noise.read", [](ExperimentSpec& s, const std::string& v) { s.read_noise = to_bool(v); }},
      {"noise.write", [](ExperimentSpec& s, const std::string& v) { s.write_noise = to_bool(v); }},
      {"noise.freeze_read", [](ExperimentSpec& s, const std::string& v) { s.freeze_read_noise = to_bool(v); }},
      {"sweep.gamma", [](ExperimentSpec& s, const std::string& v) { s.gammas = to_list<double>(v, to_double); }},
      {"sweep.clip", [](ExperimentSpec& s, const std::string& v) { s.clips = to_list<std::optional<ClipParams>>(v, to_clip); }},
      {"sweep.on_off", [](ExperimentSpec& s, const std::string& v) { s.on_off = to_list<double>(v, to_double); }},
      {"sweep.seeds", [](ExperimentSpec& s, const std::string& v) { s.seeds = to_seeds(v); }},
      {"run.batch", [](ExperimentSpec& s, const std::string& v) { s.batch = to_count(v); }},
      {"run.workers", [](ExperimentSpec& s, const std::string& v) { s.workers = to_count(v); }},
      {"run.input_seed", [](ExperimentSpec& s, const std::string& v) { s.input_seed = to_u64(v); }},
      {"output.csv", [](ExperimentSpec& s, const std::string& v) { s.csv_path = v; }},
      {"output.json", [](ExperimentSpec& s, const std::string& v) { s.json_path = v; }},
  };
  return table;
}

// Field name of the first violated invariant, with a message.
void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument(field + ": " + what);
}

}  // namespace

void ExperimentSpec::validate() const {
  model.validate();
  crossbar.validate();
  check(!gammas.empty(), "sweep.gamma", "sweep axis is empty");
  check(!clips.empty(), "sweep.clip", "sweep axis is empty");
  check(!on_off.empty(), "sweep.on_off", "sweep axis is empty");
  check(!seeds.empty(), "sweep.seeds", "sweep axis is empty");
  for (double g : gammas) check(g >= 0.0, "sweep.gamma", "gamma must be non-negative");
  for (const auto& c : clips)
    if (c) c->validate();
  for (double r : on_off) check(r > 1.0, "sweep.on_off", "on/off ratio must exceed 1");
  check(batch >= 1, "run.batch", "must be >= 1");
  check(workers >= 1, "run.workers", "must be >= 1");
  if (!weights.empty()) check(std::filesystem::exists(weights), "model.weights", "file not found: " + weights.string());
}

ExperimentSpec parse_config(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  ExperimentSpec spec;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(source, line_no, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(source, line_no, "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(source, line_no, key + ": missing value");
    try {
      it->second(spec, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, line_no, key + ": " + e.what());
    }
  }
  if (spec.on_off.empty() && !seen.count("sweep.on_off") && spec.crossbar.g_min > 0.0)
    spec.on_off = {spec.crossbar.on_off_ratio()};
  if (!spec.weights.empty() && spec.weights.is_relative() && !base_dir.empty()) spec.weights = base_dir / spec.weights;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, 0, e.what());
  }
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path.string(), 0, "cannot open file");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str(), path.string(), path.parent_path());
}

std::vector<SweepPoint> expand_grid(const ExperimentSpec& spec) {
  std::vector<SweepPoint> grid;
  for (double ratio : spec.on_off)
    for (double gamma : spec.gammas)
      for (const auto& clip : spec.clips)
        for (auto seed : spec.seeds) grid.push_back({gamma, clip, ratio, seed});
  return grid;
}

std::string format_clip(const std::optional<ClipParams>& clip) {
  if (!clip) return "none";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g:%g", clip->alpha, clip->beta);
  return buf;
}

}  // namespace xbarvit
