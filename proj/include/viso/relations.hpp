#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "viso/scene.hpp"

namespace viso {

struct RelationConfig {
  double proximity_expansion = 0.02;  // meters added to every half extent
  double gamma_below = 0.01;          // meters
  double gamma_hl = 0.03;             // meters

  void validate() const;
};

enum class Relation : std::uint8_t {
  kProximity = 1,
  kBelow = 2,
  kHigh = 4,
  kLow = 8,
};

/// Relations per ordered pair of record ids. Below(i, j): i lies under j.
/// High(i, j): the top of i exceeds the top of j by more than gamma_hl.
class RelationGraph {
 public:
  RelationGraph() = default;
  explicit RelationGraph(std::vector<int> ids);

  const std::vector<int>& ids() const { return ids_; }
  bool has(int i, int j, Relation r) const;
  std::uint8_t mask(int i, int j) const;
  void set(int i, int j, Relation r);

 private:
  std::size_t index_of(int id) const;
  std::vector<int> ids_;
  std::vector<std::uint8_t> cells_;
};

/// Separating-axis test between two oriented boxes (touching counts as overlap).
bool boxes_intersect(const OrientedBox& a, const OrientedBox& b);

/// Whether the xy shadows of two boxes overlap (convex hull of projected corners).
bool xy_projections_overlap(const OrientedBox& a, const OrientedBox& b);

RelationGraph compute_relations(const SceneSnapshot& snapshot, const RelationConfig& cfg);

enum class StrategyAction { kGraspTarget, kRemoveOccluder, kTriggerNbv };

enum class Rule { kNone, kI, kII, kIII, kIV };

std::string_view to_string(StrategyAction a);
std::string_view to_string(Rule r);

struct StrategyDecision {
  StrategyAction action = StrategyAction::kGraspTarget;
  std::vector<int> object_ids;  // the occluder to remove, or the NBV occluders
  Rule rule = Rule::kNone;

  bool operator==(const StrategyDecision&) const = default;
};

/// Throws kNoTarget when the snapshot has no target.
StrategyDecision decide_strategy(const SceneSnapshot& snapshot, const RelationGraph& graph,
                                 const RelationConfig& cfg);

struct RemovalOrder {
  std::vector<int> ids;
  bool cycle_fallback = false;  // Below had a cycle; order is by descending top height
};

/// Objects on top first, then by descending top height, then ascending id. The
/// target is excluded. Throws kInvalidArgument when no non-target object exists.
RemovalOrder removal_order(const SceneSnapshot& snapshot, const RelationGraph& graph);

}  // namespace viso
