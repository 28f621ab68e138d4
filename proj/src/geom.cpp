#include "pointmixer/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace pmx {

namespace {

thread_local std::uint64_t g_knn_calls = 0;

void require_finite(const Points& p, const char* what) {
  if (!p.allFinite()) throw GeometryError(std::string(what) + ": non-finite coordinate");
}

}  // namespace

PointCloud::PointCloud(Points p)
    : positions(std::move(p)), features(MatrixX<double>(positions.rows(), 0)) {}

PointCloud::PointCloud(Points p, MatrixX<double> f, std::vector<int> l)
    : positions(std::move(p)), features(std::move(f)), labels(std::move(l)) {}

void PointCloud::validate(int num_classes) const {
  if (size() < 1) throw GeometryError("point cloud is empty");
  require_finite(positions, "point cloud");
  if (features.rows() != size())
    throw GeometryError("feature rows " + std::to_string(features.rows()) + " != points " +
                        std::to_string(size()));
  if (!features.allFinite()) throw GeometryError("point cloud: non-finite feature");
  if (has_labels()) {
    if (static_cast<Index>(labels.size()) != size())
      throw GeometryError("label count does not match point count");
    for (int l : labels) {
      if (l < 0 || (num_classes >= 0 && l >= num_classes))
        throw GeometryError("label " + std::to_string(l) + " out of range");
    }
  }
}

PointCloud PointCloud::permuted(std::span<const Index> perm) const {
  PointCloud out;
  out.positions.resize(size(), 3);
  out.features.resize(size(), channels());
  if (has_labels()) out.labels.resize(labels.size());
  for (Index i = 0; i < size(); ++i) {
    out.positions.row(i) = positions.row(perm[i]);
    out.features.row(i) = features.row(perm[i]);
    if (has_labels()) out.labels[i] = labels[perm[i]];
  }
  return out;
}

void Adjacency::validate() const {
  if (offsets.empty() || offsets.front() != 0) throw GeometryError("adjacency offsets must start at 0");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1]) throw GeometryError("adjacency offsets decrease");
  if (offsets.back() != edges()) throw GeometryError("adjacency offsets do not cover indices");
  for (Index s : indices)
    if (s < 0 || s >= source_count) throw GeometryError("adjacency index out of range");
}

Adjacency as_adjacency(const NeighborMap& m) {
  Adjacency a;
  const Index n = m.query_count();
  a.offsets.resize(n + 1);
  for (Index q = 0; q <= n; ++q) a.offsets[q] = q * m.k;
  a.indices = m.indices;
  a.source_count = m.source_count;
  a.fixed_k = m.k;
  return a;
}

NeighborMap knn(const Points& sources, const Points& queries, Index k) {
  ++g_knn_calls;
  const Index n = sources.rows();
  if (n == 0 || queries.rows() == 0) throw GeometryError("knn: empty input");
  if (k < 1 || k > n)
    throw GeometryError("knn: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  require_finite(sources, "knn sources");
  require_finite(queries, "knn queries");

  NeighborMap m;
  m.k = k;
  m.source_count = n;
  m.indices.resize(static_cast<std::size_t>(queries.rows() * k));
  std::vector<std::pair<double, Index>> candidates(static_cast<std::size_t>(n));
  for (Index q = 0; q < queries.rows(); ++q) {
    for (Index s = 0; s < n; ++s) candidates[s] = {squared_distance(queries, q, sources, s), s};
    // pair ordering is (distance, index): exactly the documented tie rule
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    for (Index j = 0; j < k; ++j) m.indices[q * k + j] = candidates[j].second;
  }
  return m;
}

NeighborMap knn(const PointCloud& sources, const PointCloud& queries, Index k) {
  return knn(sources.positions, queries.positions, k);
}

std::uint64_t knn_call_count() { return g_knn_calls; }

InverseNeighborMap invert_map(const NeighborMap& m) {
  InverseNeighborMap inv;
  inv.source_count = m.query_count();
  inv.offsets.assign(static_cast<std::size_t>(m.source_count + 1), 0);
  for (Index s : m.indices) {
    if (s < 0 || s >= m.source_count) throw GeometryError("invert_map: index out of range");
    ++inv.offsets[s + 1];
  }
  std::partial_sum(inv.offsets.begin(), inv.offsets.end(), inv.offsets.begin());
  inv.indices.resize(m.indices.size());
  std::vector<Index> cursor(inv.offsets.begin(), inv.offsets.end() - 1);
  // queries are visited in ascending order, so every row comes out sorted
  for (Index q = 0; q < m.query_count(); ++q)
    for (Index s : m.row(q)) inv.indices[cursor[s]++] = q;
  return inv;
}

FarthestPointSample fps_with_assignment(const Points& points, Index m, Index start) {
  const Index n = points.rows();
  if (m < 1 || m > n)
    throw GeometryError("fps: m=" + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
  if (start < 0 || start >= n) throw GeometryError("fps: start index out of range");
  require_finite(points, "fps");

  FarthestPointSample out;
  out.selected.reserve(static_cast<std::size_t>(m));
  out.nearest.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> min_dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Index current = start;
  for (Index s = 0; s < m; ++s) {
    out.selected.push_back(current);
    taken[current] = 1;
    Index next = -1;
    double best = -1.0;
    for (Index i = 0; i < n; ++i) {
      const double d = squared_distance(points, i, points, current);
      if (d < min_dist[i]) {
        min_dist[i] = d;
        out.nearest[i] = s;
      }
      // duplicates can leave unselected points at distance 0, so skip taken ones
      if (!taken[i] && min_dist[i] > best) {
        best = min_dist[i];
        next = i;
      }
    }
    current = next;
  }
  return out;
}

std::vector<Index> fps(const Points& points, Index m, Index start) {
  return fps_with_assignment(points, m, start).selected;
}

MatrixX<double> relative_positions(const Points& queries, const Points& sources,
                                   const NeighborMap& m) {
  if (m.query_count() != queries.rows() || m.source_count != sources.rows())
    throw GeometryError("relative_positions: map does not match point sets");
  MatrixX<double> rel(m.query_count() * m.k, 3);
  for (Index q = 0; q < m.query_count(); ++q) {
    for (Index n = 0; n < m.k; ++n) {
      const Index s = m.indices[q * m.k + n];
      if (s < 0 || s >= sources.rows()) throw GeometryError("relative_positions: index out of range");
      rel.row(q * m.k + n) = queries.row(q) - sources.row(s);
    }
  }
  return rel;
}

Points gather_points(const Points& points, std::span<const Index> subset) {
  Points out(static_cast<Index>(subset.size()), 3);
  for (std::size_t i = 0; i < subset.size(); ++i) out.row(i) = points.row(subset[i]);
  return out;
}

Index sampled_size(Index count, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw GeometryError("sampling ratio must lie in (0, 1]");
  const Index m = static_cast<Index>(std::llround(ratio * static_cast<double>(count)));
  if (m < 1) throw GeometryError("sampling ratio produces zero points");
  return std::min(m, count);
}

HierarchyLevel build_level(const Points& previous, double ratio, Index k, Index start) {
  const Index n = previous.rows();
  const Index m = sampled_size(n, ratio);
  if (k > n) throw GeometryError("k exceeds level size");
  HierarchyLevel level;
  if (m == n) {
    level.subset.resize(static_cast<std::size_t>(n));
    std::iota(level.subset.begin(), level.subset.end(), Index{0});
    level.nearest_sampled = level.subset;
  } else {
    auto sample = fps_with_assignment(previous, m, start);
    level.subset = std::move(sample.selected);
    level.nearest_sampled = std::move(sample.nearest);
  }
  level.points = gather_points(previous, level.subset);
  level.map = knn(previous, level.points, k);
  level.inverse = invert_map(level.map);
  return level;
}

Hierarchy build_hierarchy(const Points& points, std::span<const double> ratios, Index k,
                          Index start) {
  if (points.rows() < 1) throw GeometryError("build_hierarchy: empty point set");
  Hierarchy h;
  h.levels.push_back(build_level(points, 1.0, k, start));
  for (double r : ratios) {
    const Points& prev = h.levels.back().points;
    // later levels start from position 0, which is the previous level's first pick
    h.levels.push_back(build_level(prev, r, k, h.levels.size() == 1 ? start : 0));
  }
  return h;
}

}  // namespace pmx
