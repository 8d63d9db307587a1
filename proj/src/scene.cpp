#include "viso/scene.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace viso {

const ObjectRecord* SceneSnapshot::find(int id) const {
  for (const auto& r : objects) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

ObjectRecord* SceneSnapshot::find(int id) {
  for (auto& r : objects) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

int SceneSnapshot::next_id() const {
  int next = id_watermark;
  for (const auto& r : objects) next = std::max(next, r.id + 1);
  return next;
}

void SceneSnapshot::validate() const {
  std::set<int> ids;
  int flagged = 0;
  for (const auto& r : objects) {
    if (!ids.insert(r.id).second) {
      throw Error(Errc::kInvalidArgument, "duplicate record id " + std::to_string(r.id));
    }
    if (r.observation_count < 1) {
      throw Error(Errc::kInvalidArgument, "record " + std::to_string(r.id) + " has no observations");
    }
    if (r.description.label.empty()) {
      throw Error(Errc::kInvalidArgument, "record " + std::to_string(r.id) + " has an empty label");
    }
    if (r.is_target) {
      ++flagged;
      if (target_id != r.id) {
        throw Error(Errc::kInvalidArgument, "target flag disagrees with target_id");
      }
    }
  }
  if (target_id && (flagged != 1 || !find(*target_id))) {
    throw Error(Errc::kInvalidArgument, "target_id does not name exactly one record");
  }
}

ObjectRecord merge_records(const ObjectRecord& existing, const Detection& incoming) {
  ObjectRecord out = existing;
  std::vector<Vec3> pts;
  pts.reserve(16);
  for (const auto& c : existing.box.corners()) pts.push_back(c);
  for (const auto& c : incoming.box.corners()) pts.push_back(c);
  out.box = fit_oriented_box_or_aabb(pts);
  out.observation_count += 1;
  out.last_seen_tick = std::max(existing.last_seen_tick, incoming.source_tick);
  const auto& in = incoming.description;
  if (!in.color.empty()) out.description.color = in.color;
  if (!in.pattern.empty()) out.description.pattern = in.pattern;
  if (!in.spatial_relation.empty()) out.description.spatial_relation = in.spatial_relation;
  return out;
}

namespace {

double center_distance(const OrientedBox& a, const OrientedBox& b) {
  return (a.center - b.center).norm();
}

// Record absorbs `other`: boxes refit over both corner sets, counts summed.
void absorb(ObjectRecord& keep, const ObjectRecord& other) {
  Detection as_detection{other.description, other.box, other.last_seen_tick};
  const int count = keep.observation_count + other.observation_count;
  if (other.last_seen_tick >= keep.last_seen_tick) {
    keep = merge_records(keep, as_detection);
  } else {
    // Older attributes must not overwrite newer ones.
    ObjectRecord merged = merge_records(keep, as_detection);
    merged.description = keep.description;
    keep = merged;
  }
  keep.observation_count = count;
  keep.is_target = keep.is_target || other.is_target;
}

}  // namespace

SceneSnapshot update_scene(const SceneSnapshot& snapshot, std::span<const Detection> detections,
                           const SceneConfig& cfg) {
  SceneSnapshot out = snapshot;
  out.tick = snapshot.tick + 1;
  int next = snapshot.next_id();

  for (const auto& det : detections) {
    if (det.source_tick != out.tick) {
      throw Error(Errc::kInvalidArgument, "detection tick " + std::to_string(det.source_tick) +
                                              " does not follow snapshot tick " +
                                              std::to_string(snapshot.tick));
    }
    if (det.description.label.empty()) {
      throw Error(Errc::kInvalidArgument, "detection with empty label");
    }
    ObjectRecord* match = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (auto& rec : out.objects) {
      if (rec.description.label != det.description.label) continue;
      const double d = center_distance(rec.box, det.box);
      if (d < cfg.tau_match && d < best) {
        best = d;
        match = &rec;
      }
    }
    if (match) {
      *match = merge_records(*match, det);
    } else {
      ObjectRecord rec;
      rec.id = next++;
      rec.description = det.description;
      rec.box = det.box;
      rec.observation_count = 1;
      rec.last_seen_tick = det.source_tick;
      out.objects.push_back(std::move(rec));
    }
  }
  out.id_watermark = next;

  // Merged boxes move; fold any same-label pair that drifted within tau_match.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < out.objects.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < out.objects.size() && !changed; ++j) {
        auto& a = out.objects[i];
        auto& b = out.objects[j];
        if (a.description.label != b.description.label) continue;
        if (center_distance(a.box, b.box) >= cfg.tau_match) continue;
        const bool keep_a = a.id < b.id;
        ObjectRecord& keep = keep_a ? a : b;
        const ObjectRecord other = keep_a ? b : a;
        absorb(keep, other);
        if (out.target_id == other.id) out.target_id = keep.id;
        out.objects.erase(out.objects.begin() + static_cast<std::ptrdiff_t>(keep_a ? j : i));
        changed = true;
      }
    }
  }
  return out;
}

SceneSnapshot designate_target(const SceneSnapshot& snapshot, const std::string& label,
                               AmbiguityPolicy policy) {
  SceneSnapshot out = snapshot;
  std::vector<const ObjectRecord*> hits;
  for (const auto& r : snapshot.objects) {
    if (r.description.label == label) hits.push_back(&r);
  }
  if (hits.size() > 1 && policy == AmbiguityPolicy::kThrow) {
    throw Error(Errc::kAmbiguousTarget,
                std::to_string(hits.size()) + " records carry label '" + label + "'");
  }
  std::optional<int> chosen;
  if (!hits.empty()) {
    const auto* best = *std::min_element(hits.begin(), hits.end(), [](auto* a, auto* b) {
      if (a->observation_count != b->observation_count) {
        return a->observation_count > b->observation_count;
      }
      return a->id < b->id;
    });
    chosen = best->id;
  }
  out.target_id = chosen;
  for (auto& r : out.objects) r.is_target = chosen && r.id == *chosen;
  return out;
}

SceneSnapshot remove_record(const SceneSnapshot& snapshot, int id) {
  SceneSnapshot out = snapshot;
  std::erase_if(out.objects, [id](const ObjectRecord& r) { return r.id == id; });
  if (out.target_id == id) out.target_id.reset();
  return out;
}

}  // namespace viso
