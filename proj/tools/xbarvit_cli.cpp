// xbarvit: run crossbar ViT noise sweeps from a plain-text config.
//
//   xbarvit run <config>               sweep, write CSV and JSON reports
//   xbarvit gen-model <config> <out>   write the configured model as a tensor file
//   xbarvit validate <config>          parse and check the config
//   xbarvit sweep-grid <config>        print the expanded sweep grid
//
// XBARVIT_WORKERS overrides run.workers. Exit codes: 0 ok, 1 config error,
// 2 runtime error.

#include <charconv>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "xbarvit/config.hpp"
#include "xbarvit/experiment.hpp"
#include "xbarvit/tensor_file.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

xbarvit::ExperimentSpec load(const std::string& path) {
  xbarvit::ExperimentSpec spec = xbarvit::load_config(path);
  if (const char* env = std::getenv("XBARVIT_WORKERS"); env != nullptr && *env != '\0') {
    const std::string v(env);
    int n = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc() || p != v.data() + v.size() || n < 1)
      throw xbarvit::ConfigError("XBARVIT_WORKERS", 0, "expected a positive integer, got '" + v + "'");
    spec.workers = n;
  }
  return spec;
}

int cmd_run(const std::string& path) {
  const auto spec = load(path);
  const auto result = xbarvit::run_experiment_to_files(spec);
  if (!result.ok()) {
    std::cerr << "xbarvit: " << result.error << " (" << result.rows.size() << " rows written)\n";
    return kExitRuntime;
  }
  std::cout << "wrote " << result.rows.size() << " rows to " << spec.csv_path.string() << " and summary to "
            << spec.json_path.string() << '\n';
  return 0;
}

int cmd_gen_model(const std::string& path, const std::string& out) {
  const auto spec = load(path);
  xbarvit::write_tensor_file(out, xbarvit::model_to_records(xbarvit::load_model(spec)));
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_validate(const std::string& path) {
  const auto spec = load(path);
  std::cout << path << ": ok, " << xbarvit::expand_grid(spec).size() << " sweep points\n";
  return 0;
}

int cmd_sweep_grid(const std::string& path) {
  const auto spec = load(path);
  std::cout << "gamma,clip,on_off,seed\n";
  for (const auto& p : xbarvit::expand_grid(spec))
    std::cout << xbarvit::format_number(p.gamma) << ',' << xbarvit::format_clip(p.clip) << ','
              << xbarvit::format_number(p.on_off) << ',' << p.seed << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crossbar ViT noise simulator"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  auto* run = app.add_subcommand("run", "Run the configured sweep");
  run->add_option("config", config, "Config file")->required();
  auto* gen = app.add_subcommand("gen-model", "Write the configured model as a tensor file");
  gen->add_option("config", config, "Config file")->required();
  gen->add_option("out", out, "Output tensor file")->required();
  auto* validate = app.add_subcommand("validate", "Check a config file");
  validate->add_option("config", config, "Config file")->required();
  auto* grid = app.add_subcommand("sweep-grid", "Print the expanded sweep grid");
  grid->add_option("config", config, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config);
    if (*gen) return cmd_gen_model(config, out);
    if (*validate) return cmd_validate(config);
    if (*grid) return cmd_sweep_grid(config);
  } catch (const xbarvit::ConfigError& e) {
    std::cerr << "xbarvit: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "xbarvit: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
