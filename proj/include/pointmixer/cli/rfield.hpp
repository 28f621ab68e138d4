#pragma once

#include <cstdint>
#include <vector>

#include "pointmixer/geom.hpp"

namespace pmx {

/// Directed graph over integer nodes; an edge u -> v means v's output reads u.
struct InfluenceGraph {
  std::vector<std::vector<Index>> out;

  explicit InfluenceGraph(Index nodes) : out(static_cast<std::size_t>(nodes)) {}
  void edge(Index from, Index to) { out[static_cast<std::size_t>(from)].push_back(to); }
  /// Transposed copy, for "which inputs reach this node" queries.
  InfluenceGraph reversed() const;
};

/// Nodes reachable from `start` (excluding `start` unless on a cycle), ascending.
std::vector<Index> reachable(const InfluenceGraph& g, Index start);

/// Receptive-field sizes for one cloud and its one-level hierarchy.
/// intra / intra_inter: inputs influencing each point after one mixing layer
/// over M(q), or over M(q) and its inverse row. hier_up / trilinear: fine
/// points affected by each sampled point when upsampling through the
/// inverse map (nearest fallback for uncovered points) or 3-NN interpolation.
struct ReceptiveField {
  std::vector<Index> intra;
  std::vector<Index> intra_inter;
  std::vector<Index> hier_up;
  std::vector<Index> trilinear;
};

ReceptiveField receptive_field(const Points& points, Index k, double ratio);

struct RfieldSummary {
  Index hierarchies = 0;
  Index k = 0;
  double mean_intra = 0, mean_intra_inter = 0, mean_hier_up = 0, mean_trilinear = 0;
  Index max_intra = 0;
  bool intra_bounded = true;        // every intra set has at most k points
  bool inter_superset = true;       // every intra+inter set is at least the intra size
  bool hier_dominates = true;       // per hierarchy, mean hier_up >= mean trilinear
  Index hier_failures = 0;
  bool ok() const { return intra_bounded && inter_superset && hier_dominates; }
};

/// Uniform random clouds in the unit cube, one per hierarchy, seeded per index.
RfieldSummary rfield_analysis(Index hierarchies, Index points, Index k, double ratio, std::uint64_t seed);

}  // namespace pmx
