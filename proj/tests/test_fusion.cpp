#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "viso/fusion.hpp"

using namespace viso;

namespace {

GraspObservation obs(const Vec3& c, const Vec3& mu, double kappa = 2.0, double q = 1.0, int tick = 1,
                     std::vector<double> bins = std::vector<double>(6, 0.0), double width = 0.05) {
  GraspObservation o;
  o.contact = c;
  o.mu = UnitVec3(mu);
  o.kappa = kappa;
  o.quality = q;
  o.tick = tick;
  o.approach_bins = std::move(bins);
  o.width = width;
  return o;
}

GraspObservation random_obs(std::mt19937_64& rng, double spread, int tick = 1) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> bins(6);
  for (auto& b : bins) b = u(rng);
  return obs(oracle::uniform_vec(rng, -spread, spread), oracle::random_unit(rng), 0.5 + 20 * u(rng), u(rng),
             tick, bins, 0.02 + 0.08 * u(rng));
}

// Buffer contents without ids, sorted, for order comparisons.
std::vector<std::vector<double>> canonical(const FusionState& s) {
  std::vector<std::vector<double>> out;
  for (const auto& g : s.buffer) {
    std::vector<double> row{g.contact.x(), g.contact.y(), g.contact.z(), g.eta.x(), g.eta.y(), g.eta.z(),
                            g.kappa_sum,   g.width,       g.quality(),  double(g.update_count)};
    row.insert(row.end(), g.approach_bins.begin(), g.approach_bins.end());
    out.push_back(row);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool close_rows(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k)
      if (std::abs(a[i][k] - b[i][k]) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("vmf_density examples") {
  const Vec3 mu(0, 0, 1);
  CHECK(vmf_density(Vec3(1, 0, 0), mu, 0.0) == doctest::Approx(1.0 / (4 * std::numbers::pi)));
  CHECK(vmf_density(mu, mu, 1.0) == doctest::Approx(std::exp(1.0) / (4 * std::numbers::pi * std::sinh(1.0))));
  CHECK(vmf_density(mu, mu, 1.0) == doctest::Approx(0.184065).epsilon(1e-5));
  CHECK(std::isfinite(vmf_density(mu, mu, 5000.0)));
  CHECK_THROWS_AS(vmf_density(mu, mu, -1.0), Error);
  // closed form agrees with the overflow-safe evaluation
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double k = std::uniform_real_distribution<double>(0.01, 30)(rng);
    const Vec3 b = oracle::random_unit(rng);
    const double want = k / (4 * std::numbers::pi * std::sinh(k)) * std::exp(k * mu.dot(b));
    CHECK(vmf_density(b, mu, k) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("vmf_density integrates to one") {
  std::mt19937_64 rng(32);
  const Vec3 mu = oracle::random_unit(rng);
  for (double kappa : {0.5, 5.0, 50.0}) {
    // variance of the estimator grows with kappa
    const int n = kappa > 10 ? 4'000'000 : 1'000'000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += vmf_density(oracle::random_unit(rng), mu, kappa);
    CHECK(4 * std::numbers::pi * sum / n == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("categorize examples") {
  FusionConfig cfg;
  std::vector<ContactGrasp> buf{ContactGrasp::from_observation(obs(Vec3::Zero(), Vec3(1, 0, 0)), 0)};
  const Vec3 close_dir(0.99, std::sqrt(1 - 0.99 * 0.99), 0);
  std::vector<GraspObservation> in{obs(Vec3(0.5 * cfg.gamma_d, 0, 0), close_dir),
                                   obs(Vec3(2 * cfg.gamma_d, 0, 0), Vec3(1, 0, 0))};
  const auto c = categorize(buf, in, cfg);
  CHECK(c.proximal.at(0) == 0);
  CHECK(c.fresh == std::vector<std::size_t>{1});

  cfg.proximal_rule = ProximalRule::kLiteral;
  const auto lit = categorize(buf, in, cfg);
  CHECK(lit.proximal.empty());
}

TEST_CASE("categorize matches the pairwise oracle") {
  std::mt19937_64 rng(33);
  for (auto rule : {ProximalRule::kSimilar, ProximalRule::kLiteral}) {
    FusionConfig cfg;
    cfg.proximal_rule = rule;
    cfg.gamma_theta = 0.5;
    int matched = 0;
    for (int t = 0; t < 1000; ++t) {
      std::vector<ContactGrasp> buf;
      for (int i = 0; i < 5; ++i) buf.push_back(ContactGrasp::from_observation(random_obs(rng, 0.03), i));
      std::vector<GraspObservation> in;
      for (int j = 0; j < 5; ++j) in.push_back(random_obs(rng, 0.03));
      const auto got = categorize(buf, in, cfg);
      const auto want = oracle::categorize(buf, in, cfg);
      CHECK(got.proximal == want);
      std::vector<std::size_t> fresh;
      for (std::size_t j = 0; j < in.size(); ++j)
        if (!want.count(j)) fresh.push_back(j);
      CHECK(got.fresh == fresh);
      matched += static_cast<int>(want.size());
    }
    CHECK(matched > 500);
  }
}

TEST_CASE("fuse_cluster examples") {
  SUBCASE("contact midpoint") {
    const auto p = ContactGrasp::prior(Vec3::Zero(), Vec3(1, 0, 0), 1.0, std::vector<double>(6, 0), 0.0, 1.0);
    const std::vector<GraspObservation> o{obs(Vec3(2, 0, 0), Vec3(1, 0, 0), 1.0, 1.0)};
    CHECK((fuse_cluster(p, o).contact - Vec3(1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("orthogonal baselines") {
    const auto p = ContactGrasp::prior(Vec3::Zero(), Vec3(1, 0, 0), 2.0, std::vector<double>(6, 0), 0.0, 1.0);
    const std::vector<GraspObservation> o{obs(Vec3::Zero(), Vec3(0, 1, 0), 2.0)};
    const auto g = fuse_cluster(p, o);
    CHECK((g.mu() - Vec3(1, 1, 0).normalized()).norm() < 1e-12);
    CHECK(g.kappa(KappaMode::kNatural) == doctest::Approx(2 * std::sqrt(2.0)));
    CHECK(g.kappa(KappaMode::kAdditive) == doctest::Approx(4.0));
  }
  SUBCASE("bins add") {
    const auto p = ContactGrasp::prior(Vec3::Zero(), Vec3(1, 0, 0), 1.0, {1, 0, 0, 0}, 0.0, 1.0);
    const std::vector<GraspObservation> o{obs(Vec3::Zero(), Vec3(1, 0, 0), 1.0, 1.0, 1, {0, 2, 0, 0})};
    CHECK(fuse_cluster(p, o).approach_bins == std::vector<double>{1, 2, 0, 0});
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(fuse_cluster(ContactGrasp::flat_prior(6), std::span<const GraspObservation>{}), Error);
  }
}

TEST_CASE("fuse_cluster: centroid oracle and batch equals sequential") {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 500; ++t) {
    const auto prior = ContactGrasp::from_observation(random_obs(rng, 0.1));
    std::vector<GraspObservation> o;
    const int n = 1 + t % 7;
    for (int i = 0; i < n; ++i) o.push_back(random_obs(rng, 0.1));

    const auto batch = fuse_cluster(prior, o);
    ContactGrasp seq = prior;
    for (const auto& x : o) seq = fuse_cluster(seq, std::span<const GraspObservation>(&x, 1));

    double qs = prior.quality_mass, qq = prior.quality_sq_mass;
    Vec3 c = prior.quality_mass * prior.contact;
    Vec3 eta = prior.eta;
    for (const auto& x : o) {
      qs += x.quality;
      qq += x.quality * x.quality;
      c += x.quality * x.contact;
      eta += x.kappa * x.mu.vec();
    }
    CHECK((batch.contact - c / qs).norm() < 1e-12);
    CHECK((batch.eta - eta).norm() < 1e-12);
    CHECK(batch.quality() == doctest::Approx(qq / qs));
    CHECK(batch.quality() <= 1.0);

    CHECK((batch.contact - seq.contact).norm() < 1e-12);
    CHECK((batch.eta - seq.eta).norm() < 1e-12);
    CHECK(std::abs(batch.width - seq.width) < 1e-12);
    CHECK(std::abs(batch.quality() - seq.quality()) < 1e-12);
    CHECK(batch.update_count == seq.update_count);
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(batch.approach_bins[k] - seq.approach_bins[k]) < 1e-12);
  }
}

TEST_CASE("bins after n ingests of the same vector") {
  FusionConfig cfg;
  const std::vector<double> v{0.5, 1, 0, 2, 0, 0.25};
  FusionState s;
  for (int t = 1; t <= 12; ++t) {
    const std::vector<GraspObservation> o{obs(Vec3::Zero(), Vec3(0, 0, 1), 3.0, 0.8, t, v)};
    s = ingest(s, o, cfg);
  }
  REQUIRE(s.buffer.size() == 1);
  for (std::size_t k = 0; k < v.size(); ++k) CHECK(s.buffer[0].approach_bins[k] == 12 * v[k]);
}

TEST_CASE("dbscan matches the partition oracle") {
  std::mt19937_64 rng(35);
  for (int t = 0; t < 300; ++t) {
    std::vector<Vec3> pts;
    const int n = 1 + t % 30;
    for (int i = 0; i < n; ++i) pts.push_back(oracle::uniform_vec(rng, -0.03, 0.03));
    const int min_pts = 1 + t % 4;
    const auto got = dbscan(pts, 0.01, min_pts);
    std::set<std::set<std::size_t>> a, b;
    std::size_t total = 0;
    for (const auto& c : got) {
      a.insert(std::set<std::size_t>(c.begin(), c.end()));
      total += c.size();
    }
    for (const auto& c : oracle::dbscan_partition(pts, 0.01, min_pts)) b.insert(c);
    CHECK(a == b);
    CHECK(total == pts.size());
  }
}

TEST_CASE("self_fuse examples") {
  FusionConfig cfg;
  const std::vector<GraspObservation> three{obs(Vec3(0, 0, 0), Vec3(1, 0, 0)), obs(Vec3(0.003, 0, 0), Vec3(1, 0, 0)),
                                            obs(Vec3(0, 0.003, 0), Vec3(1, 0, 0))};
  const auto one = self_fuse(three, cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].update_count == 3);

  const std::vector<GraspObservation> apart{obs(Vec3::Zero(), Vec3(1, 0, 0)),
                                            obs(Vec3(10 * cfg.dbscan_eps, 0, 0), Vec3(1, 0, 0))};
  const auto two = self_fuse(apart, cfg);
  REQUIRE(two.size() == 2);
  CHECK(two[0].update_count == 1);
  CHECK(self_fuse({}, cfg).empty());
}

TEST_CASE("ingest examples") {
  FusionConfig cfg;
  std::mt19937_64 rng(36);
  SUBCASE("empty buffer equals self_fuse") {
    std::vector<GraspObservation> o;
    for (int i = 0; i < 10; ++i) o.push_back(random_obs(rng, 0.05));
    auto sorted = o;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.tick, a.contact.x(), a.contact.y(), a.contact.z()) <
             std::tie(b.tick, b.contact.x(), b.contact.y(), b.contact.z());
    });
    FusionState expect;
    expect.buffer = self_fuse(sorted, cfg);
    CHECK(canonical(ingest({}, o, cfg)) == canonical(expect));
  }
  SUBCASE("kappa grows with repeated identical observations") {
    FusionState s;
    double last = 0.0;
    for (int t = 1; t <= 10; ++t) {
      const std::vector<GraspObservation> o{obs(Vec3(0.1, 0, 0), Vec3(0, 0, 1), 20.0, 0.9, t)};
      s = ingest(s, o, cfg);
      REQUIRE(s.buffer.size() == 1);
      const double k = s.buffer[0].kappa();
      CHECK(k > last);
      last = k;
    }
    CHECK(last == doctest::Approx(200.0));
  }
  SUBCASE("interleaved orders of two disjoint clusters") {
    std::vector<GraspObservation> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back(obs(Vec3(0, 0, 0) + oracle::uniform_vec(rng, -0.002, 0.002), Vec3(1, 0, 0), 5, 0.7, 1));
      b.push_back(obs(Vec3(0.5, 0, 0) + oracle::uniform_vec(rng, -0.002, 0.002), Vec3(0, 1, 0), 5, 0.6, 1));
    }
    for (auto& o : a) o.tick = 2;
    for (auto& o : b) o.tick = 2;
    FusionState x, y;
    for (int k = 0; k < 4; ++k) {
      const std::vector<GraspObservation> ab{a[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(k)]};
      const std::vector<GraspObservation> ba{b[static_cast<std::size_t>(3 - k)], a[static_cast<std::size_t>(3 - k)]};
      x = ingest(x, ab, cfg);
      y = ingest(y, ba, cfg);
    }
    CHECK(close_rows(canonical(x), canonical(y), 1e-12));
    CHECK(x.buffer.size() == 2);
  }
}

TEST_CASE("ingest is invariant to the order within a tick") {
  std::mt19937_64 rng(37);
  FusionConfig cfg;
  for (int t = 0; t < 100; ++t) {
    FusionState s;
    for (int tick = 1; tick <= 3; ++tick) {
      std::vector<GraspObservation> o;
      for (int i = 0; i < 8; ++i) o.push_back(random_obs(rng, 0.02, tick));
      s = ingest(s, o, cfg);
    }
    std::vector<GraspObservation> o;
    for (int i = 0; i < 8; ++i) o.push_back(random_obs(rng, 0.02, 4));
    auto shuffled = o;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto a = ingest(s, o, cfg), b = ingest(s, shuffled, cfg);
    CHECK(canonical(a) == canonical(b));
  }
}

TEST_CASE("kappa strictly increases for gated observations") {
  std::mt19937_64 rng(38);
  FusionConfig cfg;
  for (int t = 0; t < 200; ++t) {
    FusionState s;
    const Vec3 base = oracle::random_unit(rng);
    const std::vector<GraspObservation> first{obs(Vec3::Zero(), base, 10.0, 0.8, 1)};
    s = ingest(s, first, cfg);
    for (int tick = 2; tick <= 15; ++tick) {
      const Vec3 mu = (base + 0.2 * oracle::random_unit(rng)).normalized();
      const double k_before = s.buffer[0].kappa();
      const std::vector<GraspObservation> o{obs(oracle::uniform_vec(rng, -0.005, 0.005), mu, 5.0, 0.8, tick)};
      const bool gated = cosine_distance(s.buffer[0].mu(), mu) < cfg.gamma_theta;
      s = ingest(s, o, cfg);
      if (gated) {
        CHECK(s.buffer[0].kappa() > k_before);
      } else {
        CHECK(s.buffer.size() >= 2);
        break;
      }
    }
  }
}

TEST_CASE("stale single observations are evicted") {
  FusionConfig cfg;
  cfg.stale_ticks = 5;
  FusionState s;
  const std::vector<GraspObservation> one{obs(Vec3::Zero(), Vec3(1, 0, 0), 2.0, 0.5, 1)};
  const std::vector<GraspObservation> twice{obs(Vec3(1, 0, 0), Vec3(1, 0, 0), 2.0, 0.5, 1),
                                            obs(Vec3(1.001, 0, 0), Vec3(1, 0, 0), 2.0, 0.5, 1)};
  s = ingest(s, one, cfg);
  s = ingest(s, twice, cfg);
  CHECK(s.buffer.size() == 2);
  s = ingest(s, {}, cfg, 6);
  CHECK(s.buffer.size() == 2);
  s = ingest(s, {}, cfg, 7);
  CHECK(s.buffer.size() == 1);
  CHECK(s.buffer[0].update_count == 2);
}

TEST_CASE("best_grasp examples") {
  FusionConfig cfg;
  FusionState s;
  CHECK_FALSE(best_grasp(s, cfg));
  int id = 0;
  for (double q : {0.3, 0.9, 0.5}) {
    auto g = ContactGrasp::prior(Vec3::Zero(), Vec3(1, 0, 0), 5.0, {}, 0.0, q);
    g.id = id++;
    s.buffer.push_back(g);
  }
  CHECK(best_grasp(s, cfg)->id == 1);
  s.buffer.clear();
  for (double k : {5.0, 7.0}) {
    auto g = ContactGrasp::prior(Vec3::Zero(), Vec3(1, 0, 0), k, {}, 0.0, 0.9);
    g.id = id++;
    s.buffer.push_back(g);
  }
  const auto b = best_grasp(s, cfg);
  CHECK(b->kappa == doctest::Approx(7.0));
  CHECK(best_grasp(s, cfg, [](const ContactGrasp& g) { return g.kappa() < 6; })->kappa == doctest::Approx(5.0));
}

TEST_CASE("evaluate_termination examples") {
  FusionConfig cfg;
  cfg.q_max = 0.9;
  cfg.kappa_max = 50;
  const double eps = 1e-3;
  auto verdict = evaluate_termination(BestGrasp{3, 0.95, 60, Vec3::Zero()}, 1.0, cfg, eps);
  CHECK(verdict.decision == Verdict::kExecute);
  CHECK(verdict.criterion == Criterion::kII);
  CHECK(verdict.grasp_id == 3);

  verdict = evaluate_termination(BestGrasp{3, 0.5, 60, Vec3::Zero()}, 1e-5, cfg, eps);
  CHECK(verdict.decision == Verdict::kReprioritize);

  verdict = evaluate_termination(BestGrasp{3, 0.95, 10, Vec3::Zero()}, 1.0, cfg, eps);
  CHECK(verdict.decision == Verdict::kContinue);

  verdict = evaluate_termination(BestGrasp{3, 0.95, 10, Vec3::Zero()}, 1e-5, cfg, eps);
  CHECK(verdict.decision == Verdict::kExecute);
  CHECK(verdict.criterion == Criterion::kIII);

  CHECK(evaluate_termination(std::nullopt, 1e-5, cfg, eps).decision == Verdict::kReprioritize);
  CHECK(evaluate_termination(std::nullopt, 1.0, cfg, eps).decision == Verdict::kContinue);
}

TEST_CASE("Execute only when thresholds are met") {
  std::mt19937_64 rng(39);
  std::uniform_real_distribution<double> u(0, 1);
  FusionConfig cfg;
  for (int i = 0; i < 10000; ++i) {
    const BestGrasp b{0, u(rng), 100 * u(rng), Vec3::Zero()};
    const double speed = u(rng) < 0.5 ? 1e-4 : u(rng);
    const auto v = evaluate_termination(b, speed, cfg, 1e-3);
    if (v.decision == Verdict::kExecute) {
      CHECK(b.quality > cfg.q_max);
      CHECK((b.kappa > cfg.kappa_max || speed < 1e-3));
    }
  }
}

TEST_CASE("FusionEngine: readers see consistent snapshots during ingest") {
  FusionConfig cfg;
  std::mt19937_64 rng(40);
  std::vector<std::vector<GraspObservation>> ticks;
  for (int t = 1; t <= 200; ++t) {
    std::vector<GraspObservation> o;
    for (int i = 0; i < 5; ++i) o.push_back(random_obs(rng, 0.05, t));
    ticks.push_back(o);
  }
  // reference sizes per tick
  std::vector<std::size_t> sizes{0};
  FusionState ref;
  for (const auto& o : ticks) {
    ref = ingest(ref, o, cfg);
    sizes.push_back(ref.buffer.size());
  }

  FusionEngine engine(cfg);
  std::atomic<bool> done{false};
  std::atomic<int> bad{0}, reads{0};
  std::vector<std::jthread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      while (!done.load()) {
        const auto s = engine.snapshot();
        if (s.buffer.size() != sizes[static_cast<std::size_t>(s.tick)]) ++bad;
        engine.evaluate(1.0, 1e-3);
        ++reads;
      }
    });
  }
  for (const auto& o : ticks) engine.ingest(o);
  done = true;
  readers.clear();
  CHECK(bad.load() == 0);
  CHECK(reads.load() > 0);
  CHECK(canonical(engine.snapshot()) == canonical(ref));
}
