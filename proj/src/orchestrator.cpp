#include "viso/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "viso/error.hpp"

namespace viso {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::kInvalidArgument, what);
}

constexpr std::size_t kHistoryDepth = 64;
constexpr double kGraspRegionMargin = 0.02;

// Signed distance from p to the box surface, negative inside.
double box_distance(const OrientedBox& b, const Vec3& p) {
  const Vec3 d = b.to_local(p).cwiseAbs() - b.half_extents;
  const Vec3 outside = d.cwiseMax(0.0);
  return outside.norm() + std::min(d.maxCoeff(), 0.0);
}

// Physical object behind a snapshot record: same label nearest centre, else nearest.
std::optional<std::size_t> physical_object(const GroundTruthScene& gt, const ObjectRecord& rec) {
  std::optional<std::size_t> same, any;
  double best_same = std::numeric_limits<double>::infinity();
  double best_any = best_same;
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    const double d = (gt.objects[i].box.center - rec.box.center).norm();
    if (gt.objects[i].description.label == rec.description.label && d < best_same) {
      best_same = d;
      same = i;
    }
    if (d < best_any) {
      best_any = d;
      any = i;
    }
  }
  return same ? same : any;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

class Episode {
 public:
  Episode(const GroundTruthScene& scene, const LoopConfig& cfg, std::uint64_t seed)
      : gt_(scene), cfg_(cfg), seed_(episode_seed(scene, seed)), engine_(cfg.fusion) {
    x_ = gt_.sphere.from_angles(gt_.initial_azimuth, gt_.initial_elevation);
  }

  EpisodeResult run() {
    for (int tick = 1; tick <= cfg_.max_ticks; ++tick) {
      result_.ticks_used = tick;
      if (step(tick)) return std::move(result_);
    }
    result_.termination = "Budget";
    emit(cfg_.max_ticks, EventKind::kBudgetExhausted, -1, "", "max_ticks");
    return std::move(result_);
  }

 private:
  void emit(int tick, EventKind kind, int id, std::string label, std::string detail) {
    result_.events.push_back({tick, kind, id, std::move(label), std::move(detail)});
  }

  const ObjectRecord* record(std::optional<int> id) const {
    return id ? snap_.find(*id) : nullptr;
  }

  Vec3 look_point() const {
    if (const auto* r = record(grasp_object_)) return r->box.center;
    if (last_target_box_) return last_target_box_->center;
    return gt_.sphere.center;
  }

  void set_grasp_object(std::optional<int> id) {
    if (id != grasp_object_) {
      grasp_object_ = id;
      dwell_ = 0;
    }
  }

  // Chooses what to grasp this tick; returns NBV occluder points when the
  // view should move.
  std::optional<OccluderPoints> plan(int tick, const RelationGraph& graph) {
    if (override_ && !snap_.find(*override_)) override_.reset();

    const ObjectRecord* target = record(snap_.target_id);
    if (!target) {
      const ObjectRecord* current = record(grasp_object_);
      if (!current || hypotheses_.empty() ||
          std::find(hypotheses_.begin(), hypotheses_.end(), *grasp_object_) == hypotheses_.end()) {
        next_hypothesis(tick, std::nullopt);
      }
      return std::nullopt;
    }
    hypotheses_.clear();
    last_target_box_ = target->box;

    const StrategyDecision d = decide_strategy(snap_, graph, cfg_.relations);
    if (!last_decision_ || !(*last_decision_ == d)) {
      std::string ids;
      for (int id : d.object_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
      emit(tick, EventKind::kStrategy, target->id, target->description.label,
           std::string(to_string(d.action)) + " rule=" + std::string(to_string(d.rule)) +
               " objects=" + ids);
      if (d.action == StrategyAction::kRemoveOccluder) {
        const auto* occ = snap_.find(d.object_ids.front());
        if (announced_.insert(occ->id).second) {
          // relations between target and occluder as decided on
          std::string rel = "rule=i relations=";
          if (graph.has(target->id, occ->id, Relation::kBelow)) rel += "below,";
          if (graph.has(occ->id, target->id, Relation::kProximity)) rel += "proximity,";
          if (graph.has(occ->id, target->id, Relation::kHigh)) rel += "high,";
          rel.pop_back();
          emit(tick, EventKind::kRemoveOccluder, occ->id, occ->description.label, rel);
        }
      } else if (d.action == StrategyAction::kTriggerNbv) {
        emit(tick, EventKind::kTriggerNbv, target->id, target->description.label, "objects=" + ids);
      }
      last_decision_ = d;
    }

    if (d.action == StrategyAction::kRemoveOccluder) {
      set_grasp_object(d.object_ids.front());
      return std::nullopt;
    }
    if (override_) {
      set_grasp_object(override_);
      return std::nullopt;
    }
    set_grasp_object(target->id);
    if (d.action != StrategyAction::kTriggerNbv || nbv_steps_ >= cfg_.max_steps) return std::nullopt;
    OccluderPoints pts;
    for (int id : d.object_ids) {
      const auto p = occluder_points(snap_.find(id)->box);
      pts.insert(pts.end(), p.begin(), p.end());
    }
    return pts;
  }

  void next_hypothesis(int tick, std::optional<int> reject) {
    if (reject) tried_.push_back(*reject);
    OccluderInference inf;
    try {
      inf = infer_occluders(snap_, history_, last_target_box_, gt_.target_label, x_);
    } catch (const Error& e) {
      if (e.code() != Errc::kNoHypothesis) throw;
      set_grasp_object(std::nullopt);
      return;
    }
    hypotheses_.clear();
    for (int id : inf.ranking)
      if (std::find(tried_.begin(), tried_.end(), id) == tried_.end()) hypotheses_.push_back(id);
    if (hypotheses_.empty()) {
      // every hypothesis failed once; start over
      tried_.clear();
      hypotheses_ = inf.ranking;
    }
    if (hypotheses_.empty()) {
      set_grasp_object(std::nullopt);
      return;
    }
    const int head = hypotheses_.front();
    set_grasp_object(head);
    emit(tick, EventKind::kInferOccluders, head, snap_.find(head)->description.label,
         "candidates=" + std::to_string(hypotheses_.size()));
  }

  void reprioritize(int tick, const RelationGraph& graph) {
    if (!snap_.target_id) {
      next_hypothesis(tick, grasp_object_);
      return;
    }
    RemovalOrder order;
    try {
      order = removal_order(snap_, graph);
    } catch (const Error& e) {
      if (e.code() != Errc::kInvalidArgument) throw;
      dwell_ = 0;  // nothing else to move; keep observing
      return;
    }
    int pick = order.ids.front();
    if (grasp_object_ && pick == *grasp_object_ && order.ids.size() > 1) pick = order.ids[1];
    if (grasp_object_ && pick == *grasp_object_) {
      dwell_ = 0;
      return;
    }
    override_ = pick;
    set_grasp_object(pick);
    emit(tick, EventKind::kRetarget, pick, snap_.find(pick)->description.label,
         order.cycle_fallback ? "cycle_fallback" : "");
  }

  // Returns true when the episode ends.
  bool attempt(int tick, const BestGrasp& best, Criterion criterion) {
    const ObjectRecord* rec = record(grasp_object_);
    const auto idx = physical_object(gt_, *rec);
    if (!idx) return false;
    const std::string label = gt_.objects[*idx].description.label;
    const OrientedBox removed_box = gt_.objects[*idx].box;
    auto rng = make_rng(seed_, 3, static_cast<std::uint64_t>(tick));
    const GraspOutcome out = simulate_grasp_execution(gt_, label, best.contact, best.quality,
                                                      cfg_.finger_clearance, cfg_.disturb_prob, rng);
    ++result_.grasps_attempted;
    emit(tick, EventKind::kGraspAttempt, rec->id, label,
         "criterion=" + std::string(to_string(criterion)) + " grasp=" + std::to_string(best.id) + " q=" + fmt(best.quality) +
             " kappa=" + fmt(best.kappa) + " success=" + (out.success ? "1" : "0") +
             " collision=" + (out.collision ? "1" : "0") + " disturbed=" + (out.disturbed ? "1" : "0"));

    if (out.disturbed) ++failures_[2];
    if (!out.success) {
      ++failures_[out.collision ? 1 : 0];
      engine_.erase(best.id);
      dwell_ = 0;
      if (*std::max_element(failures_.begin(), failures_.end()) >= cfg_.max_failures) {
        result_.aborted = true;
        result_.termination = "Aborted";
        result_.grasp_attempts = result_.grasps_attempted;
        emit(tick, EventKind::kAbort, rec->id, label,
             "failure=" + std::to_string(failures_[0]) + " collision=" +
                 std::to_string(failures_[1]) + " disturbed=" + std::to_string(failures_[2]));
        return true;
      }
      return false;
    }

    ++result_.grasps_succeeded;
    gt_ = remove_object(gt_, label);
    // Drop every record sitting where the removed object was.
    const OrientedBox region = removed_box.expanded(cfg_.scene.tau_match);
    std::vector<int> stale;
    for (const auto& r : snap_.objects)
      if (region.contains(r.box.center)) stale.push_back(r.id);
    if (std::find(stale.begin(), stale.end(), rec->id) == stale.end()) stale.push_back(rec->id);
    const int rec_id = rec->id;
    for (int id : stale) snap_ = remove_record(snap_, id);
    const OrientedBox grasp_region = removed_box.expanded(kGraspRegionMargin);
    engine_.erase_if([&](const ContactGrasp& g) { return grasp_region.contains(g.contact); });
    emit(tick, EventKind::kObjectRemoved, rec_id, label, "");
    override_.reset();
    hypotheses_.clear();
    last_decision_.reset();
    set_grasp_object(std::nullopt);
    nbv_steps_ = 0;

    if (label == gt_.target_label) {
      result_.final_success = true;
      result_.grasp_attempts = result_.grasps_attempted;
      result_.termination = "TargetGrasped";
      emit(tick, EventKind::kTargetGrasped, rec_id, label, "");
      return true;
    }
    return false;
  }

  bool step(int tick) {
    const CameraPose pose = CameraPose::look_at(x_, look_point());
    const auto dets = simulate_detections(gt_, pose, cfg_.detection, seed_, tick);
    snap_ = update_scene(snap_, dets, cfg_.scene);
    snap_ = designate_target(snap_, gt_.target_label, AmbiguityPolicy::kPreferMostObserved);
    history_.push_back(snap_);
    if (history_.size() > kHistoryDepth) history_.erase(history_.begin());
    const RelationGraph graph = compute_relations(snap_, cfg_.relations);

    const auto nbv = plan(tick, graph);
    const ObjectRecord* target = record(snap_.target_id);

    TickRecord tr;
    tr.tick = tick;
    tr.pose = pose;
    tr.nbv_active = nbv.has_value();
    double speed = 0.0;
    if (nbv) {
      tr.field = planner_field(x_, gt_.sphere, target->box.center, *nbv);
      speed = tr.field.velocity.norm();
      ++nbv_steps_;
    } else {
      ++dwell_;
      speed = dwell_ >= cfg_.settle_ticks ? 0.0 : std::numeric_limits<double>::infinity();
    }

    const ObjectRecord* grasp_rec = record(grasp_object_);
    if (grasp_rec) tr.grasp_object = grasp_rec->description.label;
    result_.trajectory.push_back(tr);

    if (!grasp_rec) {
      ingest_nothing(tick);
      return false;
    }
    if (const auto idx = physical_object(gt_, *grasp_rec)) {
      const std::array<std::size_t, 1> ids{*idx};
      const auto obs = simulate_grasp_observations(gt_, x_, ids, cfg_.grasp, seed_, tick);
      engine_.ingest(obs, tick);
    } else {
      ingest_nothing(tick);
    }
    if (cfg_.record_buffers) result_.buffers.push_back({tick, engine_.snapshot().buffer});

    // A grasp belongs to the record whose box lies nearest its contact.
    const int owner = grasp_rec->id;
    const GraspFilter filter = [&](const ContactGrasp& g) {
      const double own = box_distance(grasp_rec->box, g.contact);
      if (own > kGraspRegionMargin) return false;
      for (const auto& r : snap_.objects)
        if (r.id != owner && box_distance(r.box, g.contact) < own) return false;
      return true;
    };
    const TerminationVerdict v = engine_.evaluate(speed, cfg_.eps_stag, filter);
    switch (v.decision) {
      case Verdict::kExecute:
        if (const auto best = engine_.best(filter)) return attempt(tick, *best, v.criterion);
        return false;
      case Verdict::kReprioritize:
        reprioritize(tick, graph);
        return false;
      case Verdict::kContinue:
        if (nbv) x_ = euler_step(x_, tr.field, gt_.sphere, cfg_.step * gt_.sphere.radius);
        return false;
    }
    return false;
  }

  void ingest_nothing(int tick) {
    // keeps the fusion clock moving so stale grasps still age out
    engine_.ingest(std::span<const GraspObservation>{}, tick);
    if (cfg_.record_buffers) result_.buffers.push_back({tick, engine_.snapshot().buffer});
  }

  GroundTruthScene gt_;
  const LoopConfig& cfg_;
  std::uint64_t seed_;
  FusionEngine engine_;
  Vec3 x_;
  SceneSnapshot snap_;
  std::vector<SceneSnapshot> history_;
  std::optional<int> grasp_object_;
  std::optional<int> override_;
  std::optional<OrientedBox> last_target_box_;
  std::optional<StrategyDecision> last_decision_;
  std::vector<int> hypotheses_;
  std::vector<int> tried_;
  std::set<int> announced_;  // occluders already reported for removal
  std::array<int, 3> failures_{0, 0, 0};  // grasp failure, collision, disturbed
  int dwell_ = 0;
  int nbv_steps_ = 0;
  EpisodeResult result_;
};

}  // namespace

void LoopConfig::validate() const {
  require(tick_hz > 0.0, "tick_hz must be positive");
  require(max_ticks > 0, "max_ticks must be positive");
  require(step > 0.0, "step must be positive");
  require(max_steps > 0, "max_steps must be positive");
  require(eps_stag > 0.0, "eps_stag must be positive");
  require(settle_ticks > 0, "settle_ticks must be positive");
  require(finger_clearance >= 0.0, "finger_clearance must be non-negative");
  require(disturb_prob >= 0.0 && disturb_prob <= 1.0, "disturb_prob must lie in [0, 1]");
  require(max_failures > 0, "max_failures must be positive");
  require(scene.tau_match > 0.0, "tau_match must be positive");
  relations.validate();
  fusion.validate();
  detection.validate();
  grasp.validate();
  require(grasp.bins == fusion.bins, "grasp bins must match fusion bins");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kStrategy: return "Strategy";
    case EventKind::kRemoveOccluder: return "RemoveOccluder";
    case EventKind::kTriggerNbv: return "TriggerNBV";
    case EventKind::kInferOccluders: return "InferOccluders";
    case EventKind::kRetarget: return "Retarget";
    case EventKind::kGraspAttempt: return "GraspAttempt";
    case EventKind::kObjectRemoved: return "ObjectRemoved";
    case EventKind::kTargetGrasped: return "TargetGrasped";
    case EventKind::kAbort: return "Abort";
    case EventKind::kBudgetExhausted: return "BudgetExhausted";
  }
  return "?";
}

std::uint64_t episode_seed(const GroundTruthScene& scene, std::uint64_t seed) {
  return seed + 0x9E3779B97F4A7C15ULL * (scene.rng_seed + 1);
}

EpisodeResult run_episode(const GroundTruthScene& scene, const LoopConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  scene.validate();
  Episode ep(scene, cfg, seed);
  EpisodeResult r = ep.run();
  if (!r.final_success) r.grasp_attempts = r.grasps_attempted;
  return r;
}

SuiteMetrics aggregate(const std::vector<EpisodeRecord>& records) {
  SuiteMetrics m;
  std::map<std::string, std::size_t> slot;
  struct Acc {
    int attempts_on_success = 0;
    int succeeded = 0;
    int attempted = 0;
  };
  std::vector<Acc> acc;
  int successes = 0;
  for (const auto& rec : records) {
    auto [it, fresh] = slot.try_emplace(rec.scene_name, m.scenes.size());
    if (fresh) {
      m.scenes.push_back({});
      m.scenes.back().scene_name = rec.scene_name;
      acc.push_back({});
    }
    SceneMetrics& s = m.scenes[it->second];
    Acc& a = acc[it->second];
    ++s.episodes;
    if (rec.result.final_success) {
      ++s.final_successes;
      ++successes;
      a.attempts_on_success += rec.result.grasp_attempts;
    }
    a.succeeded += rec.result.grasps_succeeded;
    a.attempted += rec.result.grasps_attempted;
  }
  m.episodes = static_cast<int>(records.size());
  if (m.episodes > 0) m.afsr = 100.0 * successes / m.episodes;

  int n_aga = 0, n_gsr = 0;
  for (std::size_t i = 0; i < m.scenes.size(); ++i) {
    SceneMetrics& s = m.scenes[i];
    if (s.final_successes > 0) {
      s.has_attempts = true;
      s.mean_attempts = static_cast<double>(acc[i].attempts_on_success) / s.final_successes;
      m.aga += s.mean_attempts;
      ++n_aga;
    }
    if (acc[i].attempted > 0) {
      s.has_gsr = true;
      s.grasp_success_rate = 100.0 * acc[i].succeeded / acc[i].attempted;
      m.agsr += s.grasp_success_rate;
      ++n_gsr;
    }
  }
  if (n_aga > 0) m.aga /= n_aga;
  if (n_gsr > 0) m.agsr /= n_gsr;
  return m;
}

SuiteResult run_suite(const std::vector<NamedScene>& scenes, const LoopConfig& cfg,
                      const std::vector<std::uint64_t>& seeds, int threads) {
  cfg.validate();
  SuiteResult out;
  for (const auto& s : scenes)
    for (auto seed : seeds) out.episodes.push_back({s.name, seed, {}});

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < out.episodes.size(); i += stride) {
      const auto& s = scenes[i / seeds.size()];
      out.episodes[i].result = run_episode(s.scene, cfg, out.episodes[i].seed);
    }
  };
  const std::size_t n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
  }
  out.metrics = aggregate(out.episodes);
  return out;
}

}  // namespace viso
