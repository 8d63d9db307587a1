#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "viso/fusion.hpp"
#include "viso/nbv.hpp"
#include "viso/relations.hpp"
#include "viso/scene.hpp"
#include "viso/simenv.hpp"

namespace viso {

struct LoopConfig {
  double tick_hz = 10.0;
  int max_ticks = 1500;
  RelationConfig relations;
  FusionConfig fusion;
  SceneConfig scene;
  double step = 0.02;  // Euler step as a fraction of the sphere radius
  int max_steps = 2000;
  double eps_stag = 1e-3;
  DetectionNoise detection{0.005, 0.1, 0.02, 0.1};
  GraspNoise grasp;
  int settle_ticks = 5;          // static-view ticks before the view counts as stagnant
  double finger_clearance = 0.005;
  double disturb_prob = 0.02;
  int max_failures = 4;
  bool record_buffers = true;

  void validate() const;
};

enum class EventKind {
  kStrategy,
  kRemoveOccluder,
  kTriggerNbv,
  kInferOccluders,
  kRetarget,
  kGraspAttempt,
  kObjectRemoved,
  kTargetGrasped,
  kAbort,
  kBudgetExhausted,
};

std::string_view to_string(EventKind k);

struct Event {
  int tick = 0;
  EventKind kind = EventKind::kStrategy;
  int object_id = -1;  // snapshot record id, -1 when not applicable
  std::string label;
  std::string detail;
};

struct TickRecord {
  int tick = 0;
  CameraPose pose;
  FieldSample field;
  bool nbv_active = false;
  std::string grasp_object;  // label of the current grasp target, empty if none
};

struct BufferSnapshot {
  int tick = 0;
  std::vector<ContactGrasp> grasps;
};

struct EpisodeResult {
  bool final_success = false;
  int grasp_attempts = 0;  // attempts until the target was grasped (all attempts otherwise)
  int grasps_succeeded = 0;
  int grasps_attempted = 0;
  int ticks_used = 0;
  bool aborted = false;
  std::string termination;  // TargetGrasped | Aborted | Budget
  std::vector<TickRecord> trajectory;
  std::vector<Event> events;
  std::vector<BufferSnapshot> buffers;
};

/// Mixes the scene's own seed into the run seed.
std::uint64_t episode_seed(const GroundTruthScene& scene, std::uint64_t seed);

EpisodeResult run_episode(const GroundTruthScene& scene, const LoopConfig& cfg, std::uint64_t seed);

struct EpisodeRecord {
  std::string scene_name;
  std::uint64_t seed = 0;
  EpisodeResult result;
};

struct SceneMetrics {
  std::string scene_name;
  int episodes = 0;
  int final_successes = 0;
  double mean_attempts = 0.0;  // over successful episodes only
  bool has_attempts = false;
  double grasp_success_rate = 0.0;  // percent, pooled over the scene's episodes
  bool has_gsr = false;
};

struct SuiteMetrics {
  int episodes = 0;
  double afsr = 0.0;  // percent of episodes that grasped the target
  double aga = 0.0;   // mean of per-scene attempt averages
  double agsr = 0.0;  // mean of per-scene grasp success rates, percent
  std::vector<SceneMetrics> scenes;
};

/// Table-style aggregation from per-episode records.
SuiteMetrics aggregate(const std::vector<EpisodeRecord>& records);

struct NamedScene {
  std::string name;
  GroundTruthScene scene;
};

struct SuiteResult {
  std::vector<EpisodeRecord> episodes;
  SuiteMetrics metrics;
};

/// Runs every scene under every seed; `threads` > 1 spreads episodes over workers.
SuiteResult run_suite(const std::vector<NamedScene>& scenes, const LoopConfig& cfg,
                      const std::vector<std::uint64_t>& seeds, int threads = 1);

}  // namespace viso
