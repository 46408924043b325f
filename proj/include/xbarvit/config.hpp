#pragma once

// Plain-text experiment configuration.
//
//   # comment
//   model.encoders = 4
//   sweep.gamma    = 3, 4, 5
//   sweep.clip     = none, 1:1, 1:0.25     # alpha:beta pairs
//   sweep.seeds    = 1..20                 # inclusive range or list
//
// One `key = value` per line. Unknown and duplicate keys are errors. See
// README.md for the full key list.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xbarvit/mapping.hpp"
#include "xbarvit/vit.hpp"

namespace xbarvit {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentSpec {
  ModelConfig model;
  std::uint64_t model_seed = 1;
  std::filesystem::path weights;  // empty: synthetic model from model_seed
  CrossbarConfig crossbar;
  bool read_noise = true;
  bool write_noise = true;
  bool freeze_read_noise = false;

  std::vector<double> gammas{3.0, 4.0, 5.0};
  std::vector<std::optional<ClipParams>> clips{std::nullopt};
  std::vector<double> on_off;  // filled with the crossbar's own ratio when not given
  std::vector<std::uint64_t> seeds{1};

  int batch = 1;
  int workers = 1;
  std::uint64_t input_seed = 7;

  std::filesystem::path csv_path = "results.csv";
  std::filesystem::path json_path = "summary.json";

  void validate() const;
};

struct SweepPoint {
  double gamma = 0.0;
  std::optional<ClipParams> clip;
  double on_off = 100.0;
  std::uint64_t seed = 0;
};

ExperimentSpec parse_config(const std::string& text, const std::string& source = "<config>",
                            const std::filesystem::path& base_dir = {});
ExperimentSpec load_config(const std::filesystem::path& path);

// Order: on/off ratio, then gamma, then clip setting, then seed (fastest).
std::vector<SweepPoint> expand_grid(const ExperimentSpec& spec);

std::string format_clip(const std::optional<ClipParams>& clip);

}  // namespace xbarvit
