#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "viso/relations.hpp"

using namespace viso;

namespace {

ObjectRecord rec(int id, const std::string& label, const OrientedBox& box) {
  ObjectRecord r;
  r.id = id;
  r.description.label = label;
  r.box = box;
  return r;
}

OrientedBox aabb(double x, double y, double z, double hx, double hy, double hz) {
  return OrientedBox::axis_aligned(Vec3(x, y, z), Vec3(hx, hy, hz));
}

SceneSnapshot snapshot(std::vector<ObjectRecord> objs, std::optional<int> target) {
  SceneSnapshot s;
  s.objects = std::move(objs);
  s.target_id = target;
  for (auto& r : s.objects) r.is_target = target && r.id == *target;
  return s;
}

OrientedBox random_box(std::mt19937_64& rng, double spread) {
  OrientedBox b;
  b.center = oracle::uniform_vec(rng, -spread, spread);
  b.rotation = oracle::random_rotation(rng);
  b.half_extents = oracle::uniform_vec(rng, 0.02, 0.2);
  return b;
}

}  // namespace

TEST_CASE("far cubes are not proximal") {
  RelationConfig cfg;
  cfg.proximity_expansion = 0.1;
  const auto s = snapshot({rec(0, "a", aabb(0, 0, 0, .5, .5, .5)), rec(1, "b", aabb(3, 0, 0, .5, .5, .5))}, {});
  const auto g = compute_relations(s, cfg);
  CHECK_FALSE(g.has(0, 1, Relation::kProximity));
}

TEST_CASE("cube under cube is Below") {
  const RelationConfig cfg;
  // i: top at 0.3; j: bottom at 0.5
  const auto s = snapshot({rec(0, "i", aabb(0, 0, 0.2, .1, .1, .1)), rec(1, "j", aabb(0.05, 0, 0.6, .1, .1, .1))}, {});
  const auto g = compute_relations(s, cfg);
  CHECK(g.has(0, 1, Relation::kBelow));
  CHECK_FALSE(g.has(1, 0, Relation::kBelow));
  CHECK(g.has(1, 0, Relation::kHigh));
  CHECK(g.has(0, 1, Relation::kLow));
}

TEST_CASE("compute_relations matches the brute-force oracle on random pairs") {
  std::mt19937_64 rng(11);
  RelationConfig cfg;
  int prox = 0, below = 0;
  for (int t = 0; t < 500; ++t) {
    const auto a = random_box(rng, 0.3), b = random_box(rng, 0.3);
    const auto g = compute_relations(snapshot({rec(0, "a", a), rec(1, "b", b)}, {}), cfg);
    const auto ab = oracle::relations(a, b, cfg), ba = oracle::relations(b, a, cfg);
    CHECK(g.has(0, 1, Relation::kProximity) == ab.proximity);
    CHECK(g.has(1, 0, Relation::kProximity) == ba.proximity);
    CHECK(g.has(0, 1, Relation::kBelow) == ab.below);
    CHECK(g.has(1, 0, Relation::kBelow) == ba.below);
    CHECK(g.has(0, 1, Relation::kHigh) == ab.high);
    CHECK(g.has(0, 1, Relation::kLow) == ab.low);
    CHECK(g.has(1, 0, Relation::kHigh) == ba.high);
    CHECK(g.has(1, 0, Relation::kLow) == ba.low);
    prox += ab.proximity;
    below += ab.below || ba.below;
  }
  // both outcomes exercised
  CHECK(prox > 50);
  CHECK(prox < 450);
  CHECK(below > 10);
}

TEST_CASE("relation invariants over random scenes") {
  std::mt19937_64 rng(12);
  const RelationConfig cfg;
  for (int t = 0; t < 100; ++t) {
    std::vector<ObjectRecord> objs;
    for (int i = 0; i < 6; ++i) objs.push_back(rec(i, "o" + std::to_string(i), random_box(rng, 0.4)));
    const auto g = compute_relations(snapshot(objs, {}), cfg);
    for (int i = 0; i < 6; ++i) {
      CHECK_FALSE(g.has(i, i, Relation::kBelow));
      for (int j = 0; j < 6; ++j) {
        CHECK(g.has(i, j, Relation::kProximity) == g.has(j, i, Relation::kProximity));
        CHECK(g.has(i, j, Relation::kHigh) == g.has(j, i, Relation::kLow));
        CHECK_FALSE((g.has(i, j, Relation::kBelow) && g.has(j, i, Relation::kBelow)));
      }
    }
  }
}

TEST_CASE("decide_strategy examples") {
  const RelationConfig cfg;
  SUBCASE("isolated target") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .03, .03, .05)), rec(1, "far", aabb(1, 1, .05, .03, .03, .05))}, 0);
    const auto d = decide_strategy(s, compute_relations(s, cfg), cfg);
    CHECK(d.action == StrategyAction::kGraspTarget);
  }
  SUBCASE("target under a box") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .03, .03, .05)), rec(1, "box", aabb(0, 0, .2, .06, .06, .02))}, 0);
    const auto d = decide_strategy(s, compute_relations(s, cfg), cfg);
    CHECK(d.action == StrategyAction::kRemoveOccluder);
    CHECK(d.object_ids == std::vector<int>{1});
    CHECK(d.rule == Rule::kI);
  }
  SUBCASE("one high and one low neighbour") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .03, .03, .05)),
                             rec(1, "tall", aabb(.07, 0, .15, .02, .05, .15)),
                             rec(2, "flat", aabb(-.07, 0, .01, .02, .05, .01))},
                            0);
    const auto g = compute_relations(s, cfg);
    REQUIRE(g.has(1, 0, Relation::kProximity));
    REQUIRE(g.has(2, 0, Relation::kProximity));
    const auto d = decide_strategy(s, g, cfg);
    CHECK(d.action == StrategyAction::kTriggerNbv);
    CHECK(d.object_ids == std::vector<int>{1});
    CHECK(d == decide_strategy(s, g, cfg));
  }
  SUBCASE("no target") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .03, .03, .05))}, {});
    try {
      decide_strategy(s, compute_relations(s, cfg), cfg);
      FAIL("expected NoTarget");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kNoTarget);
    }
  }
}

TEST_CASE("decide_strategy truth table over two neighbours") {
  // Each neighbour: absent, high, low, or same height; all proximal to the target.
  const RelationConfig cfg;
  const double heights[] = {0.0, 0.3, 0.04, 0.1};  // top heights; 0 marks absent
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      std::vector<ObjectRecord> objs{rec(0, "t", aabb(0, 0, .05, .03, .03, .05))};
      std::vector<int> want_high;
      bool want_low = false;
      const int kinds[] = {a, b};
      for (int k = 0; k < 2; ++k) {
        const double top = heights[kinds[k]];
        if (top == 0.0) continue;
        const int id = k + 1;
        const double x = k == 0 ? .07 : -.07;
        objs.push_back(rec(id, "n" + std::to_string(id), aabb(x, 0, top / 2, .02, .05, top / 2)));
        if (top - 0.1 > cfg.gamma_hl) want_high.push_back(id);
        if (top - 0.1 < -cfg.gamma_hl) want_low = true;
      }
      const auto s = snapshot(objs, 0);
      const auto d = decide_strategy(s, compute_relations(s, cfg), cfg);
      if (!want_high.empty()) {
        CHECK(d.action == StrategyAction::kTriggerNbv);
        CHECK(d.object_ids == want_high);
        CHECK(d.rule == Rule::kIV);
      } else {
        CHECK(d.action == StrategyAction::kGraspTarget);
        CHECK(d.rule == (want_low ? Rule::kIII : Rule::kNone));
      }
    }
  }
}

TEST_CASE("Below wins over a high neighbour and the smallest gap is chosen") {
  const RelationConfig cfg;
  const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .03, .03, .05)),
                           rec(1, "lid", aabb(0, 0, .14, .05, .05, .02)),
                           rec(2, "shelf", aabb(0, 0, .3, .1, .1, .02)),
                           rec(3, "tall", aabb(.07, 0, .15, .02, .05, .15))},
                          0);
  const auto d = decide_strategy(s, compute_relations(s, cfg), cfg);
  CHECK(d.action == StrategyAction::kRemoveOccluder);
  CHECK(d.object_ids == std::vector<int>{1});
}

TEST_CASE("removal_order examples") {
  const RelationConfig cfg;
  SUBCASE("stack A on B on C") {
    const auto s = snapshot({rec(0, "C", aabb(0, 0, .05, .05, .05, .05)), rec(1, "B", aabb(0, 0, .2, .05, .05, .05)),
                             rec(2, "A", aabb(0, 0, .35, .05, .05, .05))},
                            0);
    const auto o = removal_order(s, compute_relations(s, cfg));
    CHECK(o.ids == std::vector<int>{2, 1});
    CHECK_FALSE(o.cycle_fallback);
  }
  SUBCASE("two independent objects") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .05, .05, .05)), rec(1, "low", aabb(1, 0, .2, .05, .05, .2)),
                             rec(2, "high", aabb(-1, 0, .3, .05, .05, .3))},
                            0);
    CHECK(removal_order(s, compute_relations(s, cfg)).ids == std::vector<int>{2, 1});
  }
  SUBCASE("only the target") {
    const auto s = snapshot({rec(0, "t", aabb(0, 0, .05, .05, .05, .05))}, 0);
    CHECK_THROWS_AS(removal_order(s, compute_relations(s, cfg)), Error);
  }
}

TEST_CASE("removal_order is a topological order on random layered scenes") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> xy(-0.15, 0.15);
  std::uniform_int_distribution<int> layer(0, 3);
  const RelationConfig cfg;
  for (int t = 0; t < 200; ++t) {
    std::vector<ObjectRecord> objs;
    for (int i = 0; i < 6; ++i) {
      const double z = 0.05 + 0.12 * layer(rng);
      objs.push_back(rec(i, "o" + std::to_string(i), aabb(xy(rng), xy(rng), z, .06, .06, .04)));
    }
    const auto s = snapshot(objs, 0);
    const auto g = compute_relations(s, cfg);
    const auto o = removal_order(s, g);
    REQUIRE(o.ids.size() == 5);
    CHECK_FALSE(o.cycle_fallback);
    // anything lying on top of x must come before x
    for (std::size_t p = 0; p < o.ids.size(); ++p)
      for (std::size_t q = p + 1; q < o.ids.size(); ++q) CHECK_FALSE(g.has(o.ids[p], o.ids[q], Relation::kBelow));
  }
}
