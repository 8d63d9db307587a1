#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "viso/fusion.hpp"
#include "viso/nbv.hpp"
#include "viso/scene.hpp"

namespace viso {

struct SceneObject {
  ObjectDescription description;
  OrientedBox box;
};

struct GroundTruthScene {
  std::vector<SceneObject> objects;
  std::string target_label;
  double table_height = 0.0;
  std::uint64_t rng_seed = 0;
  ViewSphere sphere;
  double initial_azimuth = 0.0;    // radians
  double initial_elevation = 1.0;  // radians

  /// Throws kInvalidArgument if the target is missing or a box dips below the table.
  void validate() const;
  const SceneObject* find(const std::string& label) const;
  std::optional<std::size_t> index_of(const std::string& label) const;
};

/// Deterministic stream for a (seed, purpose, tick) triple.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tick = 0);

struct VisibilityReport {
  double fraction = 0.0;
  int sample_count = 0;
  std::vector<std::string> blocked_by;  // one entry per blocked sample, nearest blocker
};

/// Fraction of an 8x8 grid per camera-facing face of `target_label` that the
/// camera sees unobstructed. Throws kUnknownLabel.
VisibilityReport visibility(const GroundTruthScene& scene, const Vec3& camera,
                            const std::string& target_label, int grid = 8);

struct DetectionNoise {
  double sigma_center = 0.0;  // meters
  double drop_prob = 0.0;
  double mislabel_prob = 0.0;
  double visibility_min = 0.1;

  void validate() const;
};

/// Noisy detector reading ground truth. Objects behind the camera or with
/// visibility <= visibility_min are not reported.
std::vector<Detection> simulate_detections(const GroundTruthScene& scene, const CameraPose& camera,
                                           const DetectionNoise& noise, std::uint64_t seed,
                                           int tick);

struct GraspNoise {
  double sigma_contact = 0.002;   // meters
  double kappa_obs = 20.0;
  double q_visibility_gain = 0.65;
  double base_q = 0.3;
  int per_object = 4;
  int bins = 6;

  void validate() const;
};

/// Two antipodal contact sites across the thinnest horizontal box axis.
struct GraspSite {
  Vec3 contact;
  Vec3 baseline;  // unit, from this contact toward the opposite jaw
  int approach_bin = 0;
  double width = 0.0;
};

std::vector<GraspSite> grasp_sites(const OrientedBox& box, int bins);

/// Exact vMF draw on S^2 (inverse-CDF for the cosine, uniform tangent angle).
Vec3 sample_vmf(const Vec3& mu, double kappa, std::mt19937_64& rng);

/// Synthetic grasp observations for the given scene objects (indices into
/// scene.objects). Invisible objects yield nothing.
std::vector<GraspObservation> simulate_grasp_observations(const GroundTruthScene& scene,
                                                          const Vec3& camera,
                                                          std::span<const std::size_t> object_ids,
                                                          const GraspNoise& noise,
                                                          std::uint64_t seed, int tick);

enum class Expert { kXyOverlap, kLineOfSight, kProximity };
std::string_view to_string(Expert e);

struct OccluderVote {
  Expert expert = Expert::kXyOverlap;
  std::vector<int> candidates;  // record ids, best first
  std::vector<std::string> labels;
};

struct OccluderInference {
  std::vector<OccluderVote> votes;
  std::vector<int> ranking;     // Borda-aggregated record ids
  std::vector<double> scores;   // matching Borda points
  OrientedBox region;
};

/// Ranks likely occluders of an unseen target by three voting experts.
/// Region: `last_target_region`, else the target's last box in `history`, else
/// the extent of the latest historical scene. Throws kNoHypothesis if none.
OccluderInference infer_occluders(const SceneSnapshot& current,
                                  std::span<const SceneSnapshot> history,
                                  const std::optional<OrientedBox>& last_target_region,
                                  const std::string& target_label, const Vec3& camera);

/// Scene without `label`. Throws kUnknownLabel.
GroundTruthScene remove_object(const GroundTruthScene& scene, const std::string& label);

struct GraspOutcome {
  bool success = false;
  bool collision = false;  // fingers hit a neighbouring object
  bool disturbed = false;  // more than one object moved
};

/// Bernoulli(quality) execution; a contact inside another object's expanded
/// box is a collision and fails.
GraspOutcome simulate_grasp_execution(const GroundTruthScene& scene, const std::string& label,
                                      const Vec3& contact, double quality, double clearance,
                                      double disturb_prob, std::mt19937_64& rng);

}  // namespace viso
