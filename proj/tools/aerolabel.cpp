// aerolabel: command-line front end for the labeling pipeline stages.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aerolabel/config.hpp"
#include "aerolabel/error.hpp"
#include "aerolabel/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Args {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool force = false;
  bool quiet = false;
};

const char* describe(const std::string& command) {
  if (command == "synth") return "Generate a synthetic scene, trajectory, frames and a ready pipeline config";
  if (command == "refine-lulc") return "Refine LULC logits on conditioning imagery with the dense CRF";
  if (command == "render") return "Project the LULC raster into every frame with a pose";
  if (command == "refine-labels") return "Refine projected labels with masks from the configured provider";
  if (command == "evaluate") return "Score refined labels against ground truth frames";
  if (command == "tune") return "Search CRF parameters against a fine label raster";
  if (command == "ablate") return "Pose-noise and resolution ablations on a synthetic scene";
  return "";
}

aerolabel::PipelineConfig resolve_config(const Args& a) {
  std::vector<std::string> overrides = a.overrides;
  if (a.workers) overrides.push_back("workers=" + std::to_string(*a.workers));
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  aerolabel::PipelineConfig c = aerolabel::load_config(a.config, overrides, aerolabel::aerolabel_environment());
  if (!a.output_dir.empty()) c.output_dir = fs::absolute(a.output_dir).lexically_normal();
  c.validate();
  return c;
}

int run(const std::string& command, const Args& a) {
  const aerolabel::PipelineConfig config = resolve_config(a);
  if (command == "show-config") {
    std::cout << aerolabel::config_to_json(config);
    return 0;
  }
  aerolabel::RunOptions options;
  options.force = a.force;
  options.log = a.quiet ? nullptr : &std::cerr;
  const aerolabel::CommandResult r = aerolabel::run_command(command, config, options);
  std::cout << r.command << ": " << r.outputs.size() << " outputs in " << r.directory.string() << " (stage "
            << r.stage_key << (r.cached ? ", cached" : "") << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automatic semantic labels for aerial frames from georeferenced land cover"};
  app.set_version_flag("--version", aerolabel::version());
  app.require_subcommand(1);

  Args args;
  std::string chosen;
  std::vector<std::string> names = aerolabel::command_names();
  names.push_back("show-config");
  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(
        name, name == "show-config" ? "Print the resolved configuration as canonical JSON" : describe(name));
    sub->add_option("-c,--config", args.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", args.overrides, "Override a setting: section.key=value (repeatable)");
    sub->add_option("-j,--workers", args.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "Base seed");
    sub->add_option("-o,--output-dir", args.output_dir, "Output directory");
    sub->add_flag("--force", args.force, "Recompute even when the stage manifest is current");
    sub->add_flag("-q,--quiet", args.quiet, "No progress lines on stderr");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run(chosen, args);
  } catch (const aerolabel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const aerolabel::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const aerolabel::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
