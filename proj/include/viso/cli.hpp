#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "viso/orchestrator.hpp"

namespace viso::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitConfig = 3;

/// Input problem carrying the process exit code it maps to.
class CliError : public std::runtime_error {
 public:
  CliError(int exit_code, const std::string& msg) : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

/// Scene JSON. `origin` only labels error messages.
GroundTruthScene parse_scene(const std::string& text, const std::string& origin = "<scene>");
GroundTruthScene load_scene(const std::filesystem::path& path);
std::string dump_scene(const GroundTruthScene& scene);

/// Flat run-config JSON; keys absent from the file keep their defaults.
LoopConfig parse_config(const std::string& text, const std::string& origin = "<config>");
LoopConfig load_config(const std::filesystem::path& path);
std::string dump_config(const LoopConfig& cfg);
std::vector<std::string> config_keys();

/// %.17g, or null for non-finite values.
std::string format_number(double v);

std::string trajectory_jsonl(const EpisodeResult& r);
std::string events_jsonl(const EpisodeResult& r);
std::string grasps_csv(const EpisodeResult& r);
std::string episode_metrics_json(const EpisodeRecord& rec);
std::string suite_metrics_json(const SuiteResult& suite);

enum class FieldPoints { kCenters, kCorners };

struct FieldRow {
  Vec3 position;
  double azimuth = 0.0;
  double elevation = 0.0;
  FieldSample sample;
};

/// n x n samples over the upper hemisphere for the scene's non-target occluders.
std::vector<FieldRow> field_grid(const GroundTruthScene& scene, int n, FieldPoints points);
std::string field_csv(const std::vector<FieldRow>& rows);

/// --seed, else VISO_SEED, else 0. A malformed VISO_SEED raises a config error.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag);

struct RunOptions {
  std::filesystem::path scene;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
};

struct SuiteOptions {
  std::filesystem::path scenes;
  std::optional<std::filesystem::path> config;
  int seeds = 5;
  std::optional<std::uint64_t> seed;  // first seed of the range
  std::filesystem::path out;
  int threads = 1;
};

struct FieldOptions {
  std::filesystem::path scene;
  int grid = 24;
  FieldPoints points = FieldPoints::kCenters;
  std::filesystem::path out;
};

int cmd_run(const RunOptions& opt, std::ostream& err);
int cmd_suite(const SuiteOptions& opt, std::ostream& err);
int cmd_field(const FieldOptions& opt, std::ostream& err);

}  // namespace viso::cli
