#include "pointmixer/cli/rfield.hpp"

#include <algorithm>

#include "pointmixer/nn/rng.hpp"

namespace pmx {

InfluenceGraph InfluenceGraph::reversed() const {
  InfluenceGraph r(static_cast<Index>(out.size()));
  for (std::size_t u = 0; u < out.size(); ++u)
    for (Index v : out[u]) r.edge(v, static_cast<Index>(u));
  return r;
}

std::vector<Index> reachable(const InfluenceGraph& g, Index start) {
  std::vector<char> seen(g.out.size(), 0);
  std::vector<Index> stack{start};
  std::vector<Index> found;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    for (Index v : g.out[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      found.push_back(v);
      stack.push_back(v);
    }
  }
  std::sort(found.begin(), found.end());
  return found;
}

ReceptiveField receptive_field(const Points& points, Index k, double ratio) {
  const Index n = points.rows();
  const Index kk = std::min(k, n);
  ReceptiveField rf;

  // One mixing layer: inputs 0..n-1 feed outputs n..2n-1.
  const NeighborMap same = knn(points, points, kk);
  const InverseNeighborMap inv = invert_map(same);
  InfluenceGraph intra(2 * n), both(2 * n);
  for (Index q = 0; q < n; ++q) {
    for (Index j : same.row(q)) {
      intra.edge(j, n + q);
      both.edge(j, n + q);
    }
    for (Index j : inv.row(q)) both.edge(j, n + q);
  }
  const InfluenceGraph intra_r = intra.reversed(), both_r = both.reversed();
  for (Index q = 0; q < n; ++q) {
    rf.intra.push_back(static_cast<Index>(reachable(intra_r, n + q).size()));
    rf.intra_inter.push_back(static_cast<Index>(reachable(both_r, n + q).size()));
  }

  // Upsampling: sampled points 0..m-1 feed fine points m..m+n-1.
  const HierarchyLevel level = build_level(points, ratio, kk);
  const Index m = level.points.rows();
  InfluenceGraph hier(m + n), tri(m + n);
  for (Index i = 0; i < n; ++i) {
    if (level.inverse.row_size(i) == 0)
      hier.edge(level.nearest_sampled[static_cast<std::size_t>(i)], m + i);
    for (Index j : level.inverse.row(i)) hier.edge(j, m + i);
  }
  const NeighborMap three = knn(level.points, points, std::min<Index>(3, m));
  for (Index i = 0; i < n; ++i)
    for (Index j : three.row(i)) tri.edge(j, m + i);
  for (Index j = 0; j < m; ++j) {
    rf.hier_up.push_back(static_cast<Index>(reachable(hier, j).size()));
    rf.trilinear.push_back(static_cast<Index>(reachable(tri, j).size()));
  }
  return rf;
}

namespace {
double mean(const std::vector<Index>& v) {
  double s = 0;
  for (Index x : v) s += static_cast<double>(x);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}
}  // namespace

RfieldSummary rfield_analysis(Index hierarchies, Index points, Index k, double ratio, std::uint64_t seed) {
  RfieldSummary s;
  s.hierarchies = hierarchies;
  s.k = k;
  for (Index h = 0; h < hierarchies; ++h) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(h)));
    Points p(points, 3);
    for (Index i = 0; i < points; ++i) p.row(i) << rng.uniform(), rng.uniform(), rng.uniform();
    const ReceptiveField rf = receptive_field(p, k, ratio);
    for (std::size_t q = 0; q < rf.intra.size(); ++q) {
      s.max_intra = std::max(s.max_intra, rf.intra[q]);
      if (rf.intra[q] > k) s.intra_bounded = false;
      if (rf.intra_inter[q] < rf.intra[q]) s.inter_superset = false;
    }
    const double up = mean(rf.hier_up), tri = mean(rf.trilinear);
    if (up < tri) {
      s.hier_dominates = false;
      ++s.hier_failures;
    }
    s.mean_intra += mean(rf.intra) / static_cast<double>(hierarchies);
    s.mean_intra_inter += mean(rf.intra_inter) / static_cast<double>(hierarchies);
    s.mean_hier_up += up / static_cast<double>(hierarchies);
    s.mean_trilinear += tri / static_cast<double>(hierarchies);
  }
  return s;
}

}  // namespace pmx
