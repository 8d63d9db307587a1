#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "viso/cli.hpp"

int main(int argc, char** argv) {
  using namespace viso::cli;
  CLI::App app{"viso: next-best-view planning, spatial reasoning and grasp fusion simulator"};
  app.require_subcommand(1);

  RunOptions run;
  std::string run_config;
  std::uint64_t run_seed = 0;
  auto* run_cmd = app.add_subcommand("run", "run one episode");
  run_cmd->add_option("--scene", run.scene, "scene file")->required();
  run_cmd->add_option("--config", run_config, "run config file");
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "seed (falls back to VISO_SEED)");
  run_cmd->add_option("--out", run.out, "output directory")->required();

  SuiteOptions suite;
  std::string suite_config;
  std::uint64_t suite_seed = 0;
  auto* suite_cmd = app.add_subcommand("suite", "run every scene in a directory under several seeds");
  suite_cmd->add_option("--scenes", suite.scenes, "scene directory")->required();
  suite_cmd->add_option("--config", suite_config, "run config file");
  suite_cmd->add_option("--seeds", suite.seeds, "number of seeds per scene")->capture_default_str();
  auto* suite_seed_opt = suite_cmd->add_option("--seed", suite_seed, "first seed (falls back to VISO_SEED)");
  suite_cmd->add_option("--threads", suite.threads, "worker threads")->capture_default_str();
  suite_cmd->add_option("--out", suite.out, "output directory")->required();

  FieldOptions field;
  std::string points = "centers";
  auto* field_cmd = app.add_subcommand("field", "sample the view-sphere velocity field on a grid");
  field_cmd->add_option("--scene", field.scene, "scene file")->required();
  field_cmd->add_option("--grid", field.grid, "samples per angle")->capture_default_str();
  field_cmd->add_option("--points", points, "occluder points: centers or corners")
      ->check(CLI::IsMember({"centers", "corners"}))
      ->capture_default_str();
  field_cmd->add_option("--out", field.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitParse;
  }

  if (*run_cmd) {
    if (!run_config.empty()) run.config = run_config;
    if (*run_seed_opt) run.seed = run_seed;
    return cmd_run(run, std::cerr);
  }
  if (*suite_cmd) {
    if (!suite_config.empty()) suite.config = suite_config;
    if (*suite_seed_opt) suite.seed = suite_seed;
    return cmd_suite(suite, std::cerr);
  }
  field.points = points == "corners" ? FieldPoints::kCorners : FieldPoints::kCenters;
  return cmd_field(field, std::cerr);
}
