#pragma once

#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string_view>
#include <vector>

#include "viso/geom.hpp"

namespace viso {

/// How the concentration of a fused baseline is reported.
enum class KappaMode {
  kNatural,   // kappa = |eta|, eta = sum of kappa * mu
  kAdditive,  // kappa = sum of observed kappas (literal conjugate form)
};

/// Which side of the cosine-distance threshold counts as proximal.
enum class ProximalRule {
  kSimilar,  // 1 - cos < gamma_theta
  kLiteral,  // 1 - cos > gamma_theta
};

struct FusionConfig {
  double gamma_d = 0.02;       // meters
  double gamma_theta = 0.1;    // cosine distance
  double q_max = 0.8;
  double kappa_max = 50.0;
  double dbscan_eps = 0.01;    // meters
  int dbscan_min_pts = 2;
  int bins = 6;
  int stale_ticks = 50;
  KappaMode kappa_mode = KappaMode::kNatural;
  ProximalRule proximal_rule = ProximalRule::kSimilar;

  void validate() const;
};

std::string_view to_string(KappaMode m);
std::string_view to_string(ProximalRule r);

struct GraspObservation {
  Vec3 contact = Vec3::Zero();
  UnitVec3 mu;
  double kappa = 1.0;
  std::vector<double> approach_bins;
  double width = 0.0;
  double quality = 0.0;
  int tick = 0;
};

/// A fused contact grasp. The baseline posterior is kept as the natural
/// parameter eta; contact, width and quality are running quality-weighted sums.
struct ContactGrasp {
  int id = 0;
  Vec3 contact = Vec3::Zero();
  Vec3 eta = Vec3::Zero();
  double kappa_sum = 0.0;            // sum of observed kappas
  std::vector<double> approach_bins;
  double width = 0.0;
  double quality_mass = 0.0;         // sum of q
  double quality_sq_mass = 0.0;      // sum of q^2
  int update_count = 0;
  int last_seen_tick = 0;

  /// Grasp holding a single observation.
  static ContactGrasp from_observation(const GraspObservation& obs, int id = 0);
  /// Prior with no directional information and zero weight.
  static ContactGrasp flat_prior(int bins);
  /// Prior with explicit parameters; its weight in the contact average is `quality`.
  static ContactGrasp prior(const Vec3& contact, const Vec3& mu, double kappa,
                            std::vector<double> bins, double width, double quality);

  double kappa(KappaMode mode = KappaMode::kNatural) const;
  /// Unit mean direction, or zero when eta vanishes.
  Vec3 mu() const;
  /// Quality-weighted mean quality, in [0, 1].
  double quality() const;
};

/// Z(kappa) * exp(kappa * mu . b) on the unit 2-sphere.
double vmf_density(const Vec3& b, const Vec3& mu, double kappa);

/// Normaliser kappa / (4 pi sinh kappa), 1/(4 pi) at kappa = 0.
double vmf_normalizer(double kappa);

struct Categorization {
  std::map<std::size_t, std::size_t> proximal;  // observation index -> buffer index
  std::vector<std::size_t> fresh;               // observation indices for self-fusion
};

double cosine_distance(const Vec3& a, const Vec3& b);

/// Splits incoming observations into those matched to an existing grasp and new ones.
Categorization categorize(std::span<const ContactGrasp> buffer,
                          std::span<const GraspObservation> incoming, const FusionConfig& cfg);

/// Density-based clusters over contact points; noise points come back as
/// singleton clusters. Cluster members are index lists into `points`.
std::vector<std::vector<std::size_t>> dbscan(std::span<const Vec3> points, double eps, int min_pts);

/// Folds observations into a prior (order-independent).
ContactGrasp fuse_cluster(const ContactGrasp& prior, std::span<const GraspObservation> obs);

/// Clusters new observations and fuses each cluster from a flat prior. Ids are 0.
std::vector<ContactGrasp> self_fuse(std::span<const GraspObservation> new_obs,
                                    const FusionConfig& cfg);

struct FusionState {
  std::vector<ContactGrasp> buffer;
  int next_id = 0;
  int tick = 0;
};

/// One fusion cycle: categorize, cross-fuse, self-fuse new grasps, evict stale ones.
/// `now` advances the clock even when nothing arrives.
FusionState ingest(const FusionState& state, std::span<const GraspObservation> incoming,
                   const FusionConfig& cfg, std::optional<int> now = std::nullopt);

struct BestGrasp {
  int id = 0;
  double quality = 0.0;
  double kappa = 0.0;
  Vec3 contact = Vec3::Zero();
};

using GraspFilter = std::function<bool(const ContactGrasp&)>;

/// Highest quality, then larger kappa, then lower id.
std::optional<BestGrasp> best_grasp(const FusionState& state, const FusionConfig& cfg,
                                    const GraspFilter& filter = {});

enum class Verdict { kExecute, kContinue, kReprioritize };
enum class Criterion { kNone, kI, kII, kIII };

std::string_view to_string(Verdict v);
std::string_view to_string(Criterion c);

struct TerminationVerdict {
  Verdict decision = Verdict::kContinue;
  Criterion criterion = Criterion::kNone;
  std::optional<int> grasp_id;
};

TerminationVerdict evaluate_termination(const std::optional<BestGrasp>& best, double field_speed,
                                        const FusionConfig& cfg, double eps_stag);

/// Single-writer wrapper: ingest is exclusive, queries share a read lock.
class FusionEngine {
 public:
  explicit FusionEngine(FusionConfig cfg);

  void ingest(std::span<const GraspObservation> incoming, std::optional<int> now = std::nullopt);
  void erase(int grasp_id);
  void erase_if(const GraspFilter& pred);

  FusionState snapshot() const;
  std::optional<BestGrasp> best(const GraspFilter& filter = {}) const;
  TerminationVerdict evaluate(double field_speed, double eps_stag,
                              const GraspFilter& filter = {}) const;
  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  mutable std::shared_mutex mutex_;
  FusionState state_;
};

}  // namespace viso
