#include "viso/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "viso/relations.hpp"

namespace viso {

void GroundTruthScene::validate() const {
  if (!find(target_label)) {
    throw Error(Errc::kInvalidArgument, "target '" + target_label + "' is not in the scene");
  }
  std::set<std::string> labels;
  for (const auto& o : objects) {
    if (o.description.label.empty()) throw Error(Errc::kInvalidArgument, "object with empty label");
    if (!labels.insert(o.description.label).second) {
      throw Error(Errc::kInvalidArgument, "duplicate object label '" + o.description.label + "'");
    }
    o.box.validate();
    if (o.box.min_z() < table_height - 1e-9) {
      throw Error(Errc::kInvalidArgument, "object '" + o.description.label + "' dips below the table");
    }
  }
  sphere.validate();
}

const SceneObject* GroundTruthScene::find(const std::string& label) const {
  for (const auto& o : objects) {
    if (o.description.label == label) return &o;
  }
  return nullptr;
}

std::optional<std::size_t> GroundTruthScene::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].description.label == label) return i;
  }
  return std::nullopt;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tick) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(tick),
                    static_cast<std::uint32_t>(tick >> 32)};
  return std::mt19937_64(seq);
}

namespace {

struct Blocker {
  bool blocked = false;
  std::size_t index = 0;
};

Blocker first_blocker(const GroundTruthScene& scene, std::size_t skip, const Vec3& from,
                      const Vec3& to) {
  const Vec3 d = to - from;
  const double len = d.norm();
  Blocker out;
  if (len < 1e-12) return out;
  const UnitVec3 dir(d);
  double nearest = len - 1e-9;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i == skip) continue;
    const auto t = ray_box_intersect(from, dir, scene.objects[i].box);
    if (t && *t < nearest) {
      nearest = *t;
      out.blocked = true;
      out.index = i;
    }
  }
  return out;
}

VisibilityReport visibility_of(const GroundTruthScene& scene, const Vec3& camera, std::size_t idx,
                               int grid) {
  const OrientedBox& box = scene.objects[idx].box;
  VisibilityReport rep;
  int unblocked = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {-1, 1}) {
      const Vec3 normal = sign * box.rotation.col(axis);
      const Vec3 face_center = box.center + box.half_extents[axis] * normal;
      if (normal.dot(camera - face_center) <= 0.0) continue;
      const int a1 = (axis + 1) % 3;
      const int a2 = (axis + 2) % 3;
      for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
          const double u = (2.0 * i + 1.0) / grid - 1.0;
          const double v = (2.0 * j + 1.0) / grid - 1.0;
          const Vec3 p = face_center + u * box.half_extents[a1] * box.rotation.col(a1) +
                         v * box.half_extents[a2] * box.rotation.col(a2);
          ++rep.sample_count;
          const Blocker b = first_blocker(scene, idx, camera, p);
          if (b.blocked) {
            rep.blocked_by.push_back(scene.objects[b.index].description.label);
          } else {
            ++unblocked;
          }
        }
      }
    }
  }
  rep.fraction = rep.sample_count > 0 ? static_cast<double>(unblocked) / rep.sample_count : 0.0;
  return rep;
}

}  // namespace

VisibilityReport visibility(const GroundTruthScene& scene, const Vec3& camera,
                            const std::string& target_label, int grid) {
  const auto idx = scene.index_of(target_label);
  if (!idx) throw Error(Errc::kUnknownLabel, "no object labelled '" + target_label + "'");
  if (grid < 1) throw Error(Errc::kInvalidArgument, "visibility grid must be >= 1");
  return visibility_of(scene, camera, *idx, grid);
}

void DetectionNoise::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(sigma_center >= 0.0) || !prob(drop_prob) || !prob(mislabel_prob) || !prob(visibility_min)) {
    throw Error(Errc::kInvalidArgument, "detection noise parameters out of range");
  }
}

std::vector<Detection> simulate_detections(const GroundTruthScene& scene, const CameraPose& camera,
                                           const DetectionNoise& noise, std::uint64_t seed,
                                           int tick) {
  noise.validate();
  auto rng = make_rng(seed, 1, static_cast<std::uint64_t>(tick));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    // Fixed draw count per object keeps streams aligned across outcomes.
    const Vec3 jitter(gauss(rng), gauss(rng), gauss(rng));
    const double u_drop = unit(rng);
    const double u_mislabel = unit(rng);
    const double u_pick = unit(rng);

    const auto& obj = scene.objects[i];
    if (camera.to_camera(obj.box.center).z() <= 0.0) continue;
    if (visibility_of(scene, camera.position, i, 8).fraction <= noise.visibility_min) continue;
    if (u_drop < noise.drop_prob) continue;

    Detection det;
    det.description = obj.description;
    det.box = obj.box;
    det.box.center += noise.sigma_center * jitter;
    det.source_tick = tick;
    if (u_mislabel < noise.mislabel_prob && scene.objects.size() > 1) {
      auto k = static_cast<std::size_t>(u_pick * static_cast<double>(scene.objects.size() - 1));
      k = std::min(k, scene.objects.size() - 2);
      if (k >= i) ++k;
      det.description.label = scene.objects[k].description.label;
    }
    out.push_back(std::move(det));
  }
  return out;
}

void GraspNoise::validate() const {
  if (!(sigma_contact >= 0.0) || !(kappa_obs > 0.0) || per_object < 0 || bins < 1) {
    throw Error(Errc::kInvalidArgument, "grasp noise parameters out of range");
  }
}

std::vector<GraspSite> grasp_sites(const OrientedBox& box, int bins) {
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(box.rotation(2, i)) >= 0.7) continue;
    if (axis < 0 || box.half_extents[i] < box.half_extents[axis]) axis = i;
  }
  if (axis < 0) {
    box.half_extents.minCoeff(&axis);
  }
  const Vec3 n = box.rotation.col(axis);
  const double h = box.half_extents[axis];

  auto approach_bin = [bins](const Vec3& baseline) {
    Vec3 approach = -Vec3::UnitZ() + Vec3::UnitZ().dot(baseline) * baseline;
    if (approach.norm() < 1e-9) return 0;
    approach.normalize();
    Vec3 r1 = Vec3::UnitZ().cross(baseline);
    if (r1.norm() < 1e-9) r1 = Vec3::UnitX().cross(baseline);
    r1.normalize();
    const Vec3 r2 = baseline.cross(r1);
    double theta = std::atan2(approach.dot(r2), approach.dot(r1));
    theta = std::fmod(theta + 2.0 * std::numbers::pi, std::numbers::pi);
    return std::clamp(static_cast<int>(theta / (std::numbers::pi / bins)), 0, bins - 1);
  };

  std::vector<GraspSite> sites;
  for (int sign : {1, -1}) {
    GraspSite s;
    s.contact = box.center + sign * h * n;
    s.baseline = -sign * n;
    s.approach_bin = approach_bin(s.baseline);
    s.width = 2.0 * h;
    sites.push_back(s);
  }
  return sites;
}

Vec3 sample_vmf(const Vec3& mu, double kappa, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = 1.0 - unit(rng);  // (0, 1]
  const double phi = 2.0 * std::numbers::pi * unit(rng);
  double w;
  if (kappa < 1e-8) {
    w = 2.0 * u - 1.0;
  } else {
    w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
  }
  w = std::clamp(w, -1.0, 1.0);
  const Vec3 m = mu.normalized();
  const Vec3 seed = std::abs(m.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = (seed - seed.dot(m) * m).normalized();
  const Vec3 e2 = m.cross(e1);
  const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
  return (w * m + r * (std::cos(phi) * e1 + std::sin(phi) * e2)).normalized();
}

std::vector<GraspObservation> simulate_grasp_observations(const GroundTruthScene& scene,
                                                          const Vec3& camera,
                                                          std::span<const std::size_t> object_ids,
                                                          const GraspNoise& noise,
                                                          std::uint64_t seed, int tick) {
  noise.validate();
  auto rng = make_rng(seed, 2, static_cast<std::uint64_t>(tick));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double kappa = std::min(noise.kappa_obs, 1e6);
  std::vector<GraspObservation> out;
  for (const auto idx : object_ids) {
    if (idx >= scene.objects.size()) {
      throw Error(Errc::kInvalidArgument, "object index out of range");
    }
    const double vis = visibility_of(scene, camera, idx, 8).fraction;
    if (!(vis > 0.0)) continue;
    const auto sites = grasp_sites(scene.objects[idx].box, noise.bins);
    const double quality = std::clamp(noise.base_q + noise.q_visibility_gain * vis, 0.0, 1.0);
    for (int n = 0; n < noise.per_object; ++n) {
      const GraspSite& site = sites[static_cast<std::size_t>(n) % sites.size()];
      GraspObservation o;
      o.contact = site.contact + noise.sigma_contact * Vec3(gauss(rng), gauss(rng), gauss(rng));
      o.mu = UnitVec3(sample_vmf(site.baseline, kappa, rng));
      o.kappa = kappa;
      o.approach_bins.assign(static_cast<std::size_t>(noise.bins), 0.0);
      o.approach_bins[static_cast<std::size_t>(site.approach_bin)] = 1.0;
      if (site.approach_bin > 0) o.approach_bins[site.approach_bin - 1] = 0.25;
      if (site.approach_bin + 1 < noise.bins) o.approach_bins[site.approach_bin + 1] = 0.25;
      o.width = site.width;
      o.quality = quality;
      o.tick = tick;
      out.push_back(std::move(o));
    }
  }
  return out;
}

std::string_view to_string(Expert e) {
  switch (e) {
    case Expert::kXyOverlap: return "xy-overlap";
    case Expert::kLineOfSight: return "line-of-sight";
    case Expert::kProximity: return "proximity";
  }
  return "?";
}

namespace {

double xy_aabb_overlap_area(const OrientedBox& a, const OrientedBox& b) {
  auto bounds = [](const OrientedBox& box) {
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(1e300), hi = -lo;
    for (const auto& c : box.corners()) {
      lo = lo.cwiseMin(c.head<2>());
      hi = hi.cwiseMax(c.head<2>());
    }
    return std::pair{lo, hi};
  };
  const auto [alo, ahi] = bounds(a);
  const auto [blo, bhi] = bounds(b);
  const Eigen::Vector2d lo = alo.cwiseMax(blo);
  const Eigen::Vector2d hi = ahi.cwiseMin(bhi);
  return std::max(0.0, hi.x() - lo.x()) * std::max(0.0, hi.y() - lo.y());
}

std::optional<OrientedBox> region_from_history(std::span<const SceneSnapshot> history,
                                               const std::string& target_label) {
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    for (const auto& r : it->objects) {
      if (r.description.label == target_label) return r.box;
    }
  }
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->objects.empty()) continue;
    std::vector<Vec3> pts;
    for (const auto& r : it->objects) {
      for (const auto& c : r.box.corners()) pts.push_back(c);
    }
    return fit_oriented_box_or_aabb(pts);
  }
  return std::nullopt;
}

}  // namespace

OccluderInference infer_occluders(const SceneSnapshot& current,
                                  std::span<const SceneSnapshot> history,
                                  const std::optional<OrientedBox>& last_target_region,
                                  const std::string& target_label, const Vec3& camera) {
  OccluderInference out;
  const auto region = last_target_region ? last_target_region
                                         : region_from_history(history, target_label);
  if (!region) throw Error(Errc::kNoHypothesis, "no target region and no usable history");
  out.region = *region;

  std::vector<const ObjectRecord*> cands;
  for (const auto& r : current.objects) {
    if (r.description.label != target_label) cands.push_back(&r);
  }
  auto by_score_then_id = [](std::vector<std::pair<double, const ObjectRecord*>>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second->id < b.second->id;
    });
  };
  auto make_vote = [](Expert e, const std::vector<std::pair<double, const ObjectRecord*>>& v) {
    OccluderVote vote;
    vote.expert = e;
    for (const auto& [s, r] : v) {
      vote.candidates.push_back(r->id);
      vote.labels.push_back(r->description.label);
    }
    return vote;
  };

  {
    std::vector<std::pair<double, const ObjectRecord*>> v;
    for (const auto* r : cands) {
      if (xy_projections_overlap(r->box, *region)) {
        v.emplace_back(xy_aabb_overlap_area(r->box, *region), r);
      }
    }
    by_score_then_id(v);
    out.votes.push_back(make_vote(Expert::kXyOverlap, v));
  }
  {
    std::vector<Vec3> probes{region->center};
    for (const auto& c : region->corners()) probes.push_back(c);
    std::vector<std::pair<double, const ObjectRecord*>> v;
    for (const auto* r : cands) {
      int hits = 0;
      for (const auto& p : probes) {
        const Vec3 d = p - camera;
        const double len = d.norm();
        if (len < 1e-12) continue;
        const auto t = ray_box_intersect(camera, UnitVec3(d), r->box);
        if (t && *t < len) ++hits;
      }
      if (hits > 0) v.emplace_back(static_cast<double>(hits), r);
    }
    by_score_then_id(v);
    out.votes.push_back(make_vote(Expert::kLineOfSight, v));
  }
  {
    std::vector<std::pair<double, const ObjectRecord*>> v;
    for (const auto* r : cands) v.emplace_back(-(r->box.center - region->center).norm(), r);
    by_score_then_id(v);
    out.votes.push_back(make_vote(Expert::kProximity, v));
  }

  // Borda count: rank r in a ballot earns (n - r) points; unranked earn nothing.
  const double n = static_cast<double>(cands.size());
  std::map<int, double> points;
  for (const auto* r : cands) points[r->id] = 0.0;
  for (const auto& vote : out.votes) {
    for (std::size_t rank = 0; rank < vote.candidates.size(); ++rank) {
      points[vote.candidates[rank]] += n - static_cast<double>(rank);
    }
  }
  std::vector<std::pair<int, double>> ranked(points.begin(), points.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [id, score] : ranked) {
    out.ranking.push_back(id);
    out.scores.push_back(score);
  }
  return out;
}

GroundTruthScene remove_object(const GroundTruthScene& scene, const std::string& label) {
  const auto idx = scene.index_of(label);
  if (!idx) throw Error(Errc::kUnknownLabel, "no object labelled '" + label + "'");
  GroundTruthScene out = scene;
  out.objects.erase(out.objects.begin() + static_cast<std::ptrdiff_t>(*idx));
  return out;
}

GraspOutcome simulate_grasp_execution(const GroundTruthScene& scene, const std::string& label,
                                      const Vec3& contact, double quality, double clearance,
                                      double disturb_prob, std::mt19937_64& rng) {
  const auto idx = scene.index_of(label);
  if (!idx) throw Error(Errc::kUnknownLabel, "no object labelled '" + label + "'");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u_success = unit(rng);
  const double u_disturb = unit(rng);
  GraspOutcome out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i != *idx && scene.objects[i].box.contains(contact, clearance)) out.collision = true;
  }
  out.success = !out.collision && u_success < std::clamp(quality, 0.0, 1.0);
  out.disturbed = u_disturb < disturb_prob;
  return out;
}

}  // namespace viso
