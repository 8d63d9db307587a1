#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viso/geom.hpp"

namespace viso {

/// Label plus the three free-text attributes produced by the detector.
struct ObjectDescription {
  std::string label;
  std::string color;
  std::string pattern;
  std::string spatial_relation;
};

struct ObjectRecord {
  int id = 0;
  ObjectDescription description;
  OrientedBox box;
  int observation_count = 1;
  int last_seen_tick = 0;
  bool is_target = false;
};

struct Detection {
  ObjectDescription description;
  OrientedBox box;
  int source_tick = 0;
};

/// Immutable view of the historical object list at one tick.
struct SceneSnapshot {
  int tick = 0;
  std::vector<ObjectRecord> objects;
  std::optional<int> target_id;
  int id_watermark = 0;  // ids below this have been handed out

  const ObjectRecord* find(int id) const;
  ObjectRecord* find(int id);
  int next_id() const;

  /// Throws kInvalidArgument when ids repeat, the target flag disagrees with
  /// target_id, or a record has observation_count < 1.
  void validate() const;
};

struct SceneConfig {
  double tau_match = 0.05;  // meters, center distance for merging
};

/// Merge-or-add integration of one tick's detections. Records never disappear.
SceneSnapshot update_scene(const SceneSnapshot& snapshot, std::span<const Detection> detections,
                           const SceneConfig& cfg = {});

/// Refits the box over both corner sets; newest non-empty attributes win.
ObjectRecord merge_records(const ObjectRecord& existing, const Detection& incoming);

enum class AmbiguityPolicy {
  kThrow,
  kPreferMostObserved,  // highest observation_count, then lowest id
};

/// Sets target_id to the record carrying `label`, or clears it if none does.
/// With kThrow, several matching records raise kAmbiguousTarget.
SceneSnapshot designate_target(const SceneSnapshot& snapshot, const std::string& label,
                               AmbiguityPolicy policy = AmbiguityPolicy::kThrow);

/// Removes a record (after it has been grasped away). Clears the target when it
/// was the removed record.
SceneSnapshot remove_record(const SceneSnapshot& snapshot, int id);

}  // namespace viso
