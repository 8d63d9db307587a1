#include "viso/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <tuple>

namespace viso {

void FusionConfig::validate() const {
  if (!(gamma_d > 0.0) || !(gamma_theta > 0.0) || !(kappa_max > 0.0) || !(dbscan_eps > 0.0)) {
    throw Error(Errc::kInvalidArgument, "fusion thresholds must be positive");
  }
  if (!(q_max > 0.0 && q_max < 1.0)) throw Error(Errc::kInvalidArgument, "q_max must lie in (0, 1)");
  if (dbscan_min_pts < 1) throw Error(Errc::kInvalidArgument, "dbscan_min_pts must be >= 1");
  if (bins < 1) throw Error(Errc::kInvalidArgument, "bin count must be >= 1");
  if (stale_ticks < 1) throw Error(Errc::kInvalidArgument, "stale_ticks must be >= 1");
}

std::string_view to_string(KappaMode m) { return m == KappaMode::kNatural ? "natural" : "additive"; }

std::string_view to_string(ProximalRule r) {
  return r == ProximalRule::kSimilar ? "similar" : "literal";
}

ContactGrasp ContactGrasp::from_observation(const GraspObservation& obs, int id) {
  ContactGrasp g = fuse_cluster(flat_prior(static_cast<int>(obs.approach_bins.size())),
                                std::span<const GraspObservation>(&obs, 1));
  g.id = id;
  return g;
}

ContactGrasp ContactGrasp::flat_prior(int bins) {
  ContactGrasp g;
  g.approach_bins.assign(static_cast<std::size_t>(bins), 0.0);
  return g;
}

ContactGrasp ContactGrasp::prior(const Vec3& contact, const Vec3& mu, double kappa,
                                 std::vector<double> bins, double width, double quality) {
  ContactGrasp g;
  g.contact = contact;
  g.eta = kappa * UnitVec3(mu).vec();
  g.kappa_sum = kappa;
  g.approach_bins = std::move(bins);
  g.width = width;
  g.quality_mass = quality;
  g.quality_sq_mass = quality * quality;
  g.update_count = 1;
  return g;
}

double ContactGrasp::kappa(KappaMode mode) const {
  return mode == KappaMode::kNatural ? eta.norm() : kappa_sum;
}

Vec3 ContactGrasp::mu() const {
  const double n = eta.norm();
  return n > 0.0 ? Vec3(eta / n) : Vec3::Zero();
}

double ContactGrasp::quality() const {
  if (!(quality_mass > 0.0)) return 0.0;
  return std::clamp(quality_sq_mass / quality_mass, 0.0, 1.0);
}

double vmf_normalizer(double kappa) {
  if (kappa < 0.0) throw Error(Errc::kInvalidArgument, "kappa must be non-negative");
  constexpr double kUniform = 1.0 / (4.0 * std::numbers::pi);
  if (kappa < 1e-8) return kUniform;
  return kappa / (4.0 * std::numbers::pi * std::sinh(kappa));
}

double vmf_density(const Vec3& b, const Vec3& mu, double kappa) {
  if (kappa < 0.0) throw Error(Errc::kInvalidArgument, "kappa must be non-negative");
  if (kappa < 1e-8) return 1.0 / (4.0 * std::numbers::pi);
  // kappa / (2 pi (1 - e^{-2 kappa})) * exp(kappa (mu.b - 1)) avoids overflow of sinh.
  const double t = mu.dot(b);
  return kappa / (2.0 * std::numbers::pi * -std::expm1(-2.0 * kappa)) *
         std::exp(kappa * (t - 1.0));
}

double cosine_distance(const Vec3& a, const Vec3& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

Categorization categorize(std::span<const ContactGrasp> buffer,
                          std::span<const GraspObservation> incoming, const FusionConfig& cfg) {
  Categorization out;
  for (std::size_t j = 0; j < incoming.size(); ++j) {
    const auto& obs = incoming[j];
    std::optional<std::size_t> match;
    double best = 0.0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      const double d = (obs.contact - buffer[i].contact).norm();
      if (!(d < cfg.gamma_d)) continue;
      const double cd = cosine_distance(buffer[i].mu(), obs.mu.vec());
      const bool angular = cfg.proximal_rule == ProximalRule::kSimilar ? cd < cfg.gamma_theta
                                                                       : cd > cfg.gamma_theta;
      if (!angular) continue;
      if (!match || d < best) {
        match = i;
        best = d;
      }
    }
    if (match) {
      out.proximal[j] = *match;
    } else {
      out.fresh.push_back(j);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> dbscan(std::span<const Vec3> points, double eps, int min_pts) {
  const std::size_t n = points.size();
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if ((points[i] - points[j]).norm() <= eps) out.push_back(j);
    }
    return out;
  };

  int clusters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seeds = neighbours(i);
    if (static_cast<int>(seeds.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = clusters++;
    label[i] = c;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const std::size_t q = seeds[k];
      if (label[q] == kNoise) label[q] = c;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      auto more = neighbours(q);
      if (static_cast<int>(more.size()) >= min_pts) {
        seeds.insert(seeds.end(), more.begin(), more.end());
      }
    }
  }

  // Clusters and noise singletons, ordered by their first member.
  std::vector<std::vector<std::size_t>> out;
  std::vector<int> slot(static_cast<std::size_t>(clusters), -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kNoise) {
      out.push_back({i});
      continue;
    }
    auto& s = slot[static_cast<std::size_t>(label[i])];
    if (s < 0) {
      s = static_cast<int>(out.size());
      out.emplace_back();
    }
    out[static_cast<std::size_t>(s)].push_back(i);
  }
  return out;
}

ContactGrasp fuse_cluster(const ContactGrasp& prior, std::span<const GraspObservation> obs) {
  if (obs.empty()) throw Error(Errc::kInvalidArgument, "fuse_cluster needs observations");
  ContactGrasp g = prior;
  Vec3 weighted_contact = prior.quality_mass * prior.contact;
  double weighted_width = prior.quality_mass * prior.width;
  Vec3 plain_contact = static_cast<double>(prior.update_count) * prior.contact;
  double plain_width = static_cast<double>(prior.update_count) * prior.width;
  for (const auto& o : obs) {
    if (o.approach_bins.size() != g.approach_bins.size()) {
      throw Error(Errc::kInvalidArgument, "approach bin count mismatch");
    }
    if (!(o.kappa > 0.0) || !std::isfinite(o.kappa)) {
      throw Error(Errc::kInvalidArgument, "observation kappa must be positive and finite");
    }
    const double q = std::clamp(o.quality, 0.0, 1.0);
    weighted_contact += q * o.contact;
    weighted_width += q * o.width;
    plain_contact += o.contact;
    plain_width += o.width;
    g.quality_mass += q;
    g.quality_sq_mass += q * q;
    g.eta += o.kappa * o.mu.vec();
    g.kappa_sum += o.kappa;
    for (std::size_t k = 0; k < g.approach_bins.size(); ++k) g.approach_bins[k] += o.approach_bins[k];
    g.update_count += 1;
    g.last_seen_tick = std::max(g.last_seen_tick, o.tick);
  }
  if (g.quality_mass > 0.0) {
    g.contact = weighted_contact / g.quality_mass;
    g.width = weighted_width / g.quality_mass;
  } else {
    // All-zero qualities: fall back to the unweighted mean.
    g.contact = plain_contact / static_cast<double>(g.update_count);
    g.width = plain_width / static_cast<double>(g.update_count);
  }
  return g;
}

std::vector<ContactGrasp> self_fuse(std::span<const GraspObservation> new_obs,
                                    const FusionConfig& cfg) {
  std::vector<ContactGrasp> out;
  if (new_obs.empty()) return out;
  std::vector<Vec3> contacts;
  contacts.reserve(new_obs.size());
  for (const auto& o : new_obs) contacts.push_back(o.contact);
  for (const auto& members : dbscan(contacts, cfg.dbscan_eps, cfg.dbscan_min_pts)) {
    std::vector<GraspObservation> group;
    group.reserve(members.size());
    for (auto idx : members) group.push_back(new_obs[idx]);
    out.push_back(fuse_cluster(ContactGrasp::flat_prior(cfg.bins), group));
  }
  return out;
}

namespace {

bool observation_less(const GraspObservation& a, const GraspObservation& b) {
  auto key = [](const GraspObservation& o) {
    return std::make_tuple(o.tick, o.contact.x(), o.contact.y(), o.contact.z(), o.mu.x(), o.mu.y(),
                           o.mu.z(), o.kappa, o.quality, o.width);
  };
  if (key(a) != key(b)) return key(a) < key(b);
  return a.approach_bins < b.approach_bins;
}

}  // namespace

FusionState ingest(const FusionState& state, std::span<const GraspObservation> incoming,
                   const FusionConfig& cfg, std::optional<int> now) {
  std::vector<GraspObservation> obs(incoming.begin(), incoming.end());
  std::stable_sort(obs.begin(), obs.end(), observation_less);

  FusionState out = state;
  if (now) out.tick = std::max(out.tick, *now);
  for (const auto& o : obs) out.tick = std::max(out.tick, o.tick);

  const Categorization cat = categorize(out.buffer, obs, cfg);
  std::map<std::size_t, std::vector<GraspObservation>> groups;
  for (const auto& [j, i] : cat.proximal) groups[i].push_back(obs[j]);
  for (auto& [i, group] : groups) out.buffer[i] = fuse_cluster(out.buffer[i], group);

  std::vector<GraspObservation> fresh;
  fresh.reserve(cat.fresh.size());
  for (auto j : cat.fresh) fresh.push_back(obs[j]);
  for (auto& g : self_fuse(fresh, cfg)) {
    g.id = out.next_id++;
    out.buffer.push_back(std::move(g));
  }

  std::erase_if(out.buffer, [&](const ContactGrasp& g) {
    return g.update_count == 1 && out.tick - g.last_seen_tick > cfg.stale_ticks;
  });
  return out;
}

std::optional<BestGrasp> best_grasp(const FusionState& state, const FusionConfig& cfg,
                                    const GraspFilter& filter) {
  const ContactGrasp* best = nullptr;
  for (const auto& g : state.buffer) {
    if (filter && !filter(g)) continue;
    if (!best) {
      best = &g;
      continue;
    }
    const double qa = g.quality(), qb = best->quality();
    const double ka = g.kappa(cfg.kappa_mode), kb = best->kappa(cfg.kappa_mode);
    if (qa > qb || (qa == qb && (ka > kb || (ka == kb && g.id < best->id)))) best = &g;
  }
  if (!best) return std::nullopt;
  return BestGrasp{best->id, best->quality(), best->kappa(cfg.kappa_mode), best->contact};
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kExecute: return "Execute";
    case Verdict::kContinue: return "Continue";
    case Verdict::kReprioritize: return "Reprioritize";
  }
  return "?";
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::kNone: return "none";
    case Criterion::kI: return "i";
    case Criterion::kII: return "ii";
    case Criterion::kIII: return "iii";
  }
  return "?";
}

TerminationVerdict evaluate_termination(const std::optional<BestGrasp>& best, double field_speed,
                                        const FusionConfig& cfg, double eps_stag) {
  const double q = best ? best->quality : 0.0;
  const double k = best ? best->kappa : 0.0;
  TerminationVerdict v;
  if (best && q > cfg.q_max && k > cfg.kappa_max) {
    v.decision = Verdict::kExecute;
    v.criterion = Criterion::kII;
    v.grasp_id = best->id;
  } else if (field_speed < eps_stag) {
    v.criterion = Criterion::kIII;
    if (best && q > cfg.q_max) {
      v.decision = Verdict::kExecute;
      v.grasp_id = best->id;
    } else {
      v.decision = Verdict::kReprioritize;
    }
  }
  return v;
}

FusionEngine::FusionEngine(FusionConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void FusionEngine::ingest(std::span<const GraspObservation> incoming, std::optional<int> now) {
  std::unique_lock lock(mutex_);
  state_ = viso::ingest(state_, incoming, cfg_, now);
}

void FusionEngine::erase(int grasp_id) {
  std::unique_lock lock(mutex_);
  std::erase_if(state_.buffer, [grasp_id](const ContactGrasp& g) { return g.id == grasp_id; });
}

void FusionEngine::erase_if(const GraspFilter& pred) {
  std::unique_lock lock(mutex_);
  std::erase_if(state_.buffer, pred);
}

FusionState FusionEngine::snapshot() const {
  std::shared_lock lock(mutex_);
  return state_;
}

std::optional<BestGrasp> FusionEngine::best(const GraspFilter& filter) const {
  std::shared_lock lock(mutex_);
  return best_grasp(state_, cfg_, filter);
}

TerminationVerdict FusionEngine::evaluate(double field_speed, double eps_stag,
                                          const GraspFilter& filter) const {
  std::shared_lock lock(mutex_);
  return evaluate_termination(best_grasp(state_, cfg_, filter), field_speed, cfg_, eps_stag);
}

}  // namespace viso
