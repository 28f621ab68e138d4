#include <doctest.h>

#include "oracles.hpp"
#include "pointmixer/geom.hpp"

using namespace pmx;

namespace {

Points line(Index n) {
  Points p = Points::Zero(n, 3);
  for (Index i = 0; i < n; ++i) p(i, 0) = static_cast<double>(i);
  return p;
}

Points pts(std::initializer_list<std::array<double, 3>> list) {
  Points p(static_cast<Index>(list.size()), 3);
  Index i = 0;
  for (const auto& a : list) p.row(i++) << a[0], a[1], a[2];
  return p;
}

}  // namespace

TEST_CASE("knn examples") {
  SUBCASE("single point is its own neighbor") {
    const Points p = pts({{0, 0, 0}});
    CHECK(knn(p, p, 1).indices == std::vector<Index>{0});
  }
  SUBCASE("nearest two") {
    const Points s = pts({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
    const Points q = pts({{0, 0, 0}});
    CHECK(knn(s, q, 2).indices == std::vector<Index>{0, 1});
  }
  SUBCASE("distance tie resolves to the smaller index") {
    const Points s = pts({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}});
    const Points q = pts({{0, 0, 0}});
    CHECK(knn(s, q, 2).indices == std::vector<Index>{0, 1});
    CHECK(knn(s, q, 3).indices == std::vector<Index>{0, 1, 2});
  }
  SUBCASE("errors") {
    const Points s = pts({{0, 0, 0}, {1, 0, 0}});
    CHECK_THROWS_AS(knn(s, s, 3), GeometryError);
    CHECK_THROWS_AS(knn(s, s, 0), GeometryError);
    CHECK_THROWS_AS(knn(Points(0, 3), s, 1), GeometryError);
    CHECK_THROWS_AS(knn(s, Points(0, 3), 1), GeometryError);
    Points bad = s;
    bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(knn(bad, s, 1), GeometryError);
  }
}

TEST_CASE("knn matches brute-force sort on random clouds") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(120));
    const Index m = 1 + static_cast<Index>(rng.below(60));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    Points src = oracle::random_points(rng, n);
    // snap to a coarse lattice so exact distance ties actually occur
    if (trial % 2 == 0) src = (src * 3).array().round().matrix() / 3;
    const Points qry = oracle::random_points(rng, m);
    CHECK(oracle::rows_of(knn(src, qry, k)) == oracle::knn(src, qry, k));
  }
}

TEST_CASE("knn self-neighbor property") {
  Rng rng(5);
  const Points p = oracle::random_points(rng, 64);
  for (Index k : {1, 4, 16}) {
    const NeighborMap m = knn(p, p, k);
    for (Index i = 0; i < p.rows(); ++i) CHECK(m.row(i)[0] == i);
  }
}

TEST_CASE("invert_map examples") {
  SUBCASE("identity") {
    NeighborMap m{1, 2, {0, 1}};
    CHECK(oracle::rows_of(invert_map(m)) == std::vector<std::vector<Index>>{{0}, {1}});
  }
  SUBCASE("shared neighborhoods") {
    NeighborMap m{2, 2, {0, 1, 0, 1}};
    CHECK(oracle::rows_of(invert_map(m)) == std::vector<std::vector<Index>>{{0, 1}, {0, 1}});
  }
  SUBCASE("empty rows") {
    NeighborMap m{1, 2, {1, 1}};
    const auto inv = invert_map(m);
    CHECK(oracle::rows_of(inv) == std::vector<std::vector<Index>>{{}, {0, 1}});
    CHECK(inv.offsets == std::vector<Index>{0, 0, 2});
  }
  SUBCASE("malformed") {
    NeighborMap m{1, 2, {0, 2}};
    CHECK_THROWS_AS(invert_map(m), GeometryError);
  }
}

TEST_CASE("inverse map properties on random maps") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Index ns = 2 + static_cast<Index>(rng.below(80));
    const Index nq = 1 + static_cast<Index>(rng.below(80));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(ns)));
    const Points src = oracle::random_points(rng, ns);
    const Points qry = oracle::random_points(rng, nq);
    const NeighborMap m = knn(src, qry, k);
    const InverseNeighborMap inv = invert_map(m);
    inv.validate();
    CHECK(inv.edges() == nq * k);
    CHECK(oracle::rows_of(inv) == oracle::invert(oracle::rows_of(m), ns));
    // reading the inverse as a bipartite graph and inverting again restores m's membership
    std::vector<std::vector<Index>> back(static_cast<std::size_t>(nq));
    for (Index s = 0; s < inv.rows(); ++s)
      for (Index q : inv.row(s)) back[q].push_back(s);
    for (Index q = 0; q < nq; ++q) {
      std::vector<Index> row(m.row(q).begin(), m.row(q).end());
      std::sort(row.begin(), row.end());
      CHECK(back[q] == row);
    }
  }
  SUBCASE("same-level inverse rows are never empty") {
    const Points p = oracle::random_points(rng, 50);
    const auto inv = invert_map(knn(p, p, 4));
    for (Index i = 0; i < inv.rows(); ++i) {
      CHECK(inv.row_size(i) > 0);
      CHECK(std::binary_search(inv.row(i).begin(), inv.row(i).end(), i));
    }
  }
}

TEST_CASE("fps examples") {
  const Points l = line(10);
  CHECK(fps(l, 1, 2) == std::vector<Index>{2});
  CHECK(fps(l, 2, 0) == std::vector<Index>{0, 9});
  CHECK(fps(l, 3, 0) == std::vector<Index>{0, 9, 4});
  CHECK_THROWS_AS(fps(l, 0, 0), GeometryError);
  CHECK_THROWS_AS(fps(l, 11, 0), GeometryError);
  CHECK_THROWS_AS(fps(l, 2, 10), GeometryError);
}

TEST_CASE("fps matches greedy oracle and covers everything") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(100));
    const Index start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    Points p = oracle::random_points(rng, n);
    if (trial % 3 == 0) p = (p * 2).array().round().matrix();  // duplicates and ties
    const auto all = fps(p, n, start);
    CHECK(all == oracle::fps(p, n, start));
    std::vector<Index> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < n; ++i) CHECK(sorted[i] == i);
  }
}

TEST_CASE("fps nearest assignment agrees with 1-NN over the selection") {
  Rng rng(23);
  Points p = oracle::random_points(rng, 90);
  p.topRows(30) = (p.topRows(30) * 2).array().round().matrix();
  const auto s = fps_with_assignment(p, 20, 0);
  const Points sel = gather_points(p, s.selected);
  const NeighborMap nn = knn(sel, p, 1);
  for (Index i = 0; i < p.rows(); ++i) CHECK(s.nearest[i] == nn.indices[i]);
}

TEST_CASE("relative positions") {
  const Points s = pts({{0, 0, 0}, {1, 0, 0}});
  const Points q = pts({{1, 0, 0}});
  const NeighborMap m = knn(s, q, 2);
  const auto rel = relative_positions(q, s, m);
  CHECK(rel.row(0).isZero());  // self neighbor
  CHECK(rel.row(1) == Eigen::RowVector3d(1, 0, 0));

  Rng rng(2);
  const Points a = oracle::random_points(rng, 8);
  const NeighborMap ma = knn(a, a, 3);
  const auto ra = relative_positions(a, a, ma);
  for (Index i = 0; i < 8; ++i)
    for (Index n = 0; n < 3; ++n)
      for (int c = 0; c < 3; ++c) CHECK(ra(i * 3 + n, c) == a(i, c) - a(ma.indices[i * 3 + n], c));

  NeighborMap bad{1, 2, {5}};
  CHECK_THROWS_AS(relative_positions(q, s, bad), GeometryError);
}

TEST_CASE("build_hierarchy") {
  SUBCASE("unit ratio keeps the identity subset") {
    Rng rng(1);
    const Points p = oracle::random_points(rng, 12);
    const std::vector<double> ratios{1.0};
    const Hierarchy h = build_hierarchy(p, ratios, 3);
    REQUIRE(h.levels.size() == 2);
    for (const auto& lvl : h.levels) {
      for (Index i = 0; i < 12; ++i) {
        CHECK(lvl.subset[i] == i);
        CHECK(lvl.map.row(i)[0] == i);
      }
    }
  }
  SUBCASE("16 points at 1/4") {
    Rng rng(4);
    const Points p = oracle::random_points(rng, 16);
    const std::vector<double> ratios{0.25};
    const Hierarchy h = build_hierarchy(p, ratios, 4);
    const auto& lvl = h.levels[1];
    CHECK(lvl.subset == oracle::fps(p, 4, 0));
    CHECK(lvl.map.query_count() == 4);
    CHECK(oracle::rows_of(lvl.map) == oracle::knn(p, gather_points(p, lvl.subset), 4));
    CHECK(lvl.inverse.edges() == 16);
    CHECK(oracle::rows_of(lvl.inverse) == oracle::invert(oracle::rows_of(lvl.map), 16));
  }
  SUBCASE("collinear") {
    const Points p = line(10);
    const std::vector<double> ratios{0.2};
    const Hierarchy h = build_hierarchy(p, ratios, 2, 0);
    CHECK(h.levels[1].subset == std::vector<Index>{0, 9});
    CHECK(oracle::rows_of(h.levels[1].map) == std::vector<std::vector<Index>>{{0, 1}, {9, 8}});
  }
  SUBCASE("subsets shrink and stay inside the previous level") {
    Rng rng(9);
    const Points p = oracle::random_points(rng, 200);
    const std::vector<double> ratios{0.5, 0.25, 0.5};
    const Hierarchy h = build_hierarchy(p, ratios, 4);
    for (std::size_t l = 1; l < h.levels.size(); ++l) {
      const auto& prev = h.levels[l - 1].points;
      CHECK(h.levels[l].points.rows() < prev.rows());
      for (std::size_t i = 0; i < h.levels[l].subset.size(); ++i)
        CHECK(h.levels[l].points.row(i) == prev.row(h.levels[l].subset[i]));
    }
  }
  SUBCASE("errors") {
    const Points p = line(10);
    const std::vector<double> tiny{0.01};
    CHECK_THROWS_AS(build_hierarchy(p, tiny, 2), GeometryError);
    const std::vector<double> zero{0.0};
    CHECK_THROWS_AS(build_hierarchy(p, zero, 2), GeometryError);
    const std::vector<double> half{0.2};
    CHECK_THROWS_AS(build_hierarchy(p, half, 11), GeometryError);
  }
}

TEST_CASE("geometry is deterministic") {
  Rng a(99), b(99);
  const Points p = oracle::random_points(a, 150);
  const Points q = oracle::random_points(b, 150);
  const std::vector<double> ratios{0.25, 0.25};
  const Hierarchy h1 = build_hierarchy(p, ratios, 8);
  const Hierarchy h2 = build_hierarchy(q, ratios, 8);
  for (std::size_t l = 0; l < h1.levels.size(); ++l) {
    CHECK(h1.levels[l].subset == h2.levels[l].subset);
    CHECK(h1.levels[l].map == h2.levels[l].map);
    CHECK(h1.levels[l].inverse == h2.levels[l].inverse);
  }
}
