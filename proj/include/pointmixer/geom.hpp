#pragma once

#include <span>
#include <vector>

#include "pointmixer/types.hpp"

namespace pmx {

/// Positions plus per-point feature channels and optional per-point labels.
struct PointCloud {
  Points positions;
  MatrixX<double> features;  // N x C, C may be 0
  std::vector<int> labels;   // empty when unlabeled

  PointCloud() = default;
  explicit PointCloud(Points p);
  PointCloud(Points p, MatrixX<double> f, std::vector<int> l = {});

  Index size() const { return positions.rows(); }
  Index channels() const { return features.cols(); }
  bool has_labels() const { return !labels.empty(); }

  /// Throws GeometryError when a structural invariant does not hold.
  /// A negative num_classes skips the label range check.
  void validate(int num_classes = -1) const;

  /// Reorders points so that result point i is this cloud's point perm[i].
  PointCloud permuted(std::span<const Index> perm) const;
};

/// Fixed-K neighbor index map, one row of k source indices per query.
struct NeighborMap {
  Index k = 0;
  Index source_count = 0;
  std::vector<Index> indices;  // query_count x k, row-major

  Index query_count() const { return k == 0 ? 0 : static_cast<Index>(indices.size()) / k; }
  std::span<const Index> row(Index q) const {
    return {indices.data() + q * k, static_cast<std::size_t>(k)};
  }
  bool operator==(const NeighborMap&) const = default;
};

/// Compressed-sparse rows of source indices per query. Serves as the inverse
/// neighbor map and as the common edge layout consumed by the mixing layers.
struct Adjacency {
  std::vector<Index> offsets{0};
  std::vector<Index> indices;
  Index source_count = 0;
  Index fixed_k = 0;  // non-zero only when built from a fixed-K NeighborMap

  Index rows() const { return static_cast<Index>(offsets.size()) - 1; }
  Index edges() const { return static_cast<Index>(indices.size()); }
  Index row_size(Index r) const { return offsets[r + 1] - offsets[r]; }
  std::span<const Index> row(Index r) const {
    return {indices.data() + offsets[r], static_cast<std::size_t>(row_size(r))};
  }
  void validate() const;
  bool operator==(const Adjacency&) const = default;
};

using InverseNeighborMap = Adjacency;

Adjacency as_adjacency(const NeighborMap& m);

inline double squared_distance(const Points& a, Index i, const Points& b, Index j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

/// Exact k nearest sources per query, ascending by distance with ties broken
/// by ascending source index.
NeighborMap knn(const Points& sources, const Points& queries, Index k);
NeighborMap knn(const PointCloud& sources, const PointCloud& queries, Index k);

/// Number of knn() calls made on the current thread since it started.
std::uint64_t knn_call_count();

/// Row i lists {j : i in m[j]} in ascending order.
InverseNeighborMap invert_map(const NeighborMap& m);

struct FarthestPointSample {
  std::vector<Index> selected;
  // For every input point, the position in `selected` of its nearest selected
  // point (ties resolve to the earliest selected, matching knn's index rule).
  std::vector<Index> nearest;
};

/// Greedy max-min sampling. Ties pick the smallest point index.
std::vector<Index> fps(const Points& points, Index m, Index start = 0);
FarthestPointSample fps_with_assignment(const Points& points, Index m, Index start = 0);

/// (N*k) x 3 rows of p_query - p_neighbor, row q*k+n for neighbor n of query q.
MatrixX<double> relative_positions(const Points& queries, const Points& sources,
                                   const NeighborMap& m);

Points gather_points(const Points& points, std::span<const Index> subset);

struct HierarchyLevel {
  std::vector<Index> subset;  // indices into the previous level
  Points points;
  NeighborMap map;                    // sampled queries -> previous-level sources
  InverseNeighborMap inverse;         // previous-level point -> sampled queries holding it
  std::vector<Index> nearest_sampled; // per previous-level point, nearest sampled position
};

/// Level 0 is the identity subset with its same-level map; each ratio then adds
/// one FPS-sampled level.
struct Hierarchy {
  std::vector<HierarchyLevel> levels;
};

/// Number of points kept when sampling `count` points at `ratio`.
Index sampled_size(Index count, double ratio);

/// One sampling step from `previous`: FPS subset, forward map and its inverse.
/// A ratio giving every point keeps the identity subset.
HierarchyLevel build_level(const Points& previous, double ratio, Index k, Index start = 0);

Hierarchy build_hierarchy(const Points& points, std::span<const double> ratios, Index k,
                          Index start = 0);

}  // namespace pmx
