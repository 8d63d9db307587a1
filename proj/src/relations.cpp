#include "viso/relations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace viso {

void RelationConfig::validate() const {
  if (!(proximity_expansion > 0.0) || !(gamma_below > 0.0) || !(gamma_hl > 0.0)) {
    throw Error(Errc::kInvalidArgument, "relation thresholds must be strictly positive");
  }
}

RelationGraph::RelationGraph(std::vector<int> ids)
    : ids_(std::move(ids)), cells_(ids_.size() * ids_.size(), 0) {}

std::size_t RelationGraph::index_of(int id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) {
    throw Error(Errc::kInvalidArgument, "id " + std::to_string(id) + " not in relation graph");
  }
  return static_cast<std::size_t>(it - ids_.begin());
}

std::uint8_t RelationGraph::mask(int i, int j) const {
  return cells_[index_of(i) * ids_.size() + index_of(j)];
}

bool RelationGraph::has(int i, int j, Relation r) const {
  return (mask(i, j) & static_cast<std::uint8_t>(r)) != 0;
}

void RelationGraph::set(int i, int j, Relation r) {
  cells_[index_of(i) * ids_.size() + index_of(j)] |= static_cast<std::uint8_t>(r);
}

bool boxes_intersect(const OrientedBox& a, const OrientedBox& b) {
  const Mat3& ra = a.rotation;
  const Mat3& rb = b.rotation;
  const Vec3 d = b.center - a.center;
  std::array<Vec3, 15> axes;
  int n = 0;
  for (int i = 0; i < 3; ++i) axes[n++] = ra.col(i);
  for (int i = 0; i < 3; ++i) axes[n++] = rb.col(i);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) axes[n++] = ra.col(i).cross(rb.col(j));
  }
  for (const auto& axis : axes) {
    const double len = axis.norm();
    // Parallel edge pairs give no new axis.
    if (len < 1e-12) continue;
    const Vec3 u = axis / len;
    const double proj_a = (ra.transpose() * u).cwiseAbs().dot(a.half_extents);
    const double proj_b = (rb.transpose() * u).cwiseAbs().dot(b.half_extents);
    if (std::abs(d.dot(u)) > proj_a + proj_b) return false;
  }
  return true;
}

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain, counter-clockwise, collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::vector<Vec2> xy_shadow(const OrientedBox& box) {
  std::vector<Vec2> pts;
  for (const auto& c : box.corners()) pts.emplace_back(c.x(), c.y());
  return convex_hull(std::move(pts));
}

bool separated_along(const std::vector<Vec2>& a, const std::vector<Vec2>& b, const Vec2& axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (const auto& p : a) {
    amin = std::min(amin, p.dot(axis));
    amax = std::max(amax, p.dot(axis));
  }
  for (const auto& p : b) {
    bmin = std::min(bmin, p.dot(axis));
    bmax = std::max(bmax, p.dot(axis));
  }
  return amax < bmin || bmax < amin;
}

bool polygons_overlap(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  for (const auto* poly : {&a, &b}) {
    const auto& p = *poly;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec2 e = p[(i + 1) % p.size()] - p[i];
      if (e.norm() < 1e-15) continue;
      if (separated_along(a, b, Vec2(-e.y(), e.x()))) return false;
    }
  }
  return true;
}

}  // namespace

bool xy_projections_overlap(const OrientedBox& a, const OrientedBox& b) {
  return polygons_overlap(xy_shadow(a), xy_shadow(b));
}

RelationGraph compute_relations(const SceneSnapshot& snapshot, const RelationConfig& cfg) {
  cfg.validate();
  std::vector<int> ids;
  ids.reserve(snapshot.objects.size());
  for (const auto& r : snapshot.objects) ids.push_back(r.id);
  RelationGraph graph(ids);

  const auto& objs = snapshot.objects;
  std::vector<std::vector<Vec2>> shadows;
  shadows.reserve(objs.size());
  for (const auto& r : objs) shadows.push_back(xy_shadow(r.box));

  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (i == j) continue;
      const auto& bi = objs[i].box;
      const auto& bj = objs[j].box;
      const int a = objs[i].id;
      const int b = objs[j].id;
      if (i < j && boxes_intersect(bi.expanded(cfg.proximity_expansion),
                                   bj.expanded(cfg.proximity_expansion))) {
        graph.set(a, b, Relation::kProximity);
        graph.set(b, a, Relation::kProximity);
      }
      if (bj.min_z() - bi.max_z() > cfg.gamma_below && polygons_overlap(shadows[i], shadows[j])) {
        graph.set(a, b, Relation::kBelow);
      }
      const double h = bi.max_z() - bj.max_z();
      if (h > cfg.gamma_hl) graph.set(a, b, Relation::kHigh);
      if (h < -cfg.gamma_hl) graph.set(a, b, Relation::kLow);
    }
  }
  return graph;
}

std::string_view to_string(StrategyAction a) {
  switch (a) {
    case StrategyAction::kGraspTarget: return "GraspTarget";
    case StrategyAction::kRemoveOccluder: return "RemoveOccluder";
    case StrategyAction::kTriggerNbv: return "TriggerNBV";
  }
  return "?";
}

std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::kNone: return "none";
    case Rule::kI: return "i";
    case Rule::kII: return "ii";
    case Rule::kIII: return "iii";
    case Rule::kIV: return "iv";
  }
  return "?";
}

StrategyDecision decide_strategy(const SceneSnapshot& snapshot, const RelationGraph& graph,
                                 const RelationConfig& cfg) {
  (void)cfg;
  if (!snapshot.target_id || !snapshot.find(*snapshot.target_id)) {
    throw Error(Errc::kNoTarget, "snapshot has no target");
  }
  const int target = *snapshot.target_id;
  const ObjectRecord& trec = *snapshot.find(target);

  // Rule i: something rests above the target. Smallest gap first, then lowest id.
  const ObjectRecord* cover = nullptr;
  double cover_gap = std::numeric_limits<double>::infinity();
  for (const auto& r : snapshot.objects) {
    if (r.id == target || !graph.has(target, r.id, Relation::kBelow)) continue;
    const double gap = r.box.min_z() - trec.box.max_z();
    if (gap < cover_gap || (gap == cover_gap && cover && r.id < cover->id)) {
      cover_gap = gap;
      cover = &r;
    }
  }
  if (cover) return {StrategyAction::kRemoveOccluder, {cover->id}, Rule::kI};

  // Rules ii/iv: tall neighbours trigger view planning; rule iii drops low ones.
  std::vector<int> high;
  bool low_neighbour = false;
  for (const auto& r : snapshot.objects) {
    if (r.id == target || !graph.has(r.id, target, Relation::kProximity)) continue;
    if (graph.has(r.id, target, Relation::kHigh)) high.push_back(r.id);
    if (graph.has(r.id, target, Relation::kLow)) low_neighbour = true;
  }
  if (!high.empty()) {
    std::sort(high.begin(), high.end());
    return {StrategyAction::kTriggerNbv, high, Rule::kIV};
  }
  return {StrategyAction::kGraspTarget, {}, low_neighbour ? Rule::kIII : Rule::kNone};
}

RemovalOrder removal_order(const SceneSnapshot& snapshot, const RelationGraph& graph) {
  std::vector<const ObjectRecord*> nodes;
  for (const auto& r : snapshot.objects) {
    if (!snapshot.target_id || r.id != *snapshot.target_id) nodes.push_back(&r);
  }
  if (nodes.empty()) {
    throw Error(Errc::kInvalidArgument, "no non-target object to order");
  }
  auto higher_first = [](const ObjectRecord* a, const ObjectRecord* b) {
    const double za = a->box.max_z();
    const double zb = b->box.max_z();
    if (za != zb) return za > zb;
    return a->id < b->id;
  };

  // Below(i, j) means j has to go before i.
  const std::size_t n = nodes.size();
  std::vector<int> blockers(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && graph.has(nodes[i]->id, nodes[j]->id, Relation::kBelow)) ++blockers[i];
    }
  }
  RemovalOrder out;
  std::vector<bool> done(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    const ObjectRecord* pick = nullptr;
    std::size_t pick_idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (done[i] || blockers[i] != 0) continue;
      if (!pick || higher_first(nodes[i], pick)) {
        pick = nodes[i];
        pick_idx = i;
      }
    }
    if (!pick) {
      std::sort(nodes.begin(), nodes.end(), higher_first);
      out.ids.clear();
      for (const auto* r : nodes) out.ids.push_back(r->id);
      out.cycle_fallback = true;
      return out;
    }
    done[pick_idx] = true;
    out.ids.push_back(pick->id);
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && graph.has(nodes[i]->id, pick->id, Relation::kBelow)) --blockers[i];
    }
  }
  return out;
}

}  // namespace viso
