#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pointmixer/geom.hpp"
#include "pointmixer/nn/ops.hpp"

namespace pmx {

struct PointMixerOptions {
  Index channels = 0;
  Index pe_channels = 0;  // 0 means equal to channels
  Index reduction = 4;
  bool g1_nonlinear = false;  // g1 as linear-GELU-linear instead of one linear
  bool positional_encoding = true;
};

/// Channel maps g1, g2, g3 and the positional encoder delta of one layer.
/// g2 ends in width 1: one scalar score per neighbor.
struct PointMixerParams {
  Mlp g1;
  Mlp g2;
  Mlp g3;
  Mlp delta;
  Index channels = 0;
  Index pe_channels = 0;
  bool positional_encoding = true;
};

template <typename Scalar>
PointMixerParams make_point_mixer(ParamStore<Scalar>& store, const std::string& name,
                                  const PointMixerOptions& opt, Rng& rng) {
  const Index c = opt.channels;
  const Index pe = opt.pe_channels > 0 ? opt.pe_channels : c;
  if (c < 1 || opt.reduction < 1) throw ShapeError("point mixer " + name + ": invalid widths");
  PointMixerParams p;
  p.channels = c;
  p.pe_channels = pe;
  p.positional_encoding = opt.positional_encoding;
  p.g1 = opt.g1_nonlinear ? make_mlp(store, name + ".g1", {c, c, c}, rng)
                          : make_mlp(store, name + ".g1", {c, c}, rng);
  const Index hidden = std::max<Index>(1, c / opt.reduction);
  p.g2 = make_mlp(store, name + ".g2", {opt.positional_encoding ? c + pe : c, hidden, 1}, rng);
  p.g3 = make_mlp(store, name + ".g3", {c, c}, rng);
  if (opt.positional_encoding) p.delta = make_mlp(store, name + ".delta", {3, pe, pe}, rng);
  return p;
}

/// Edge-list view of an Adjacency: edge e joins query[e] and source[e];
/// edges of query q occupy [offsets[q], offsets[q+1]).
struct EdgeSet {
  IndexList query;
  IndexList source;
  IndexList offsets;
  Index queries = 0;
  Index sources = 0;
  Index size() const { return static_cast<Index>(source->size()); }
};

inline EdgeSet make_edges(const Adjacency& adj) {
  std::vector<Index> q(adj.indices.size());
  for (Index r = 0; r < adj.rows(); ++r)
    std::fill(q.begin() + adj.offsets[r], q.begin() + adj.offsets[r + 1], r);
  return EdgeSet{make_index_list(std::move(q)), make_index_list(adj.indices),
                 make_index_list(adj.offsets), adj.rows(), adj.source_count};
}

/// Rows p_query[q_e] - p_source[s_e] for every edge.
template <typename Scalar>
MatrixX<Scalar> edge_offsets(const Points& p_query, const Points& p_source, const EdgeSet& edges) {
  if (p_query.rows() != edges.queries || p_source.rows() != edges.sources)
    throw GeometryError("neighborhood does not match the point sets");
  MatrixX<Scalar> rel(edges.size(), 3);
  for (Index e = 0; e < edges.size(); ++e)
    rel.row(e) = (p_query.row((*edges.query)[e]) - p_source.row((*edges.source)[e])).template cast<Scalar>();
  return rel;
}

/// Intermediate values of one mixing call, for inspection in tests.
template <typename Scalar>
struct MixTrace {
  Var<Scalar> scores;   // E x 1
  Var<Scalar> weights;  // E x 1, softmax over each query's edges
};

/// Score-weighted aggregation: for query i and each edge (i, j),
/// s_j = g2([g1(x_j); delta(p_i - p_j)]) and y_i = sum_j softmax_j(s) g3(x_j).
/// Queries without edges produce zero rows.
template <typename Scalar>
Var<Scalar> point_mix(Var<Scalar> x_source, const Points& p_query, const Points& p_source,
                      const Adjacency& adj, const PointMixerParams& p, MixTrace<Scalar>* trace = nullptr) {
  if (x_source.cols() != p.channels)
    throw ShapeError("point_mix: feature width " + std::to_string(x_source.cols()) +
                     " != layer width " + std::to_string(p.channels));
  if (x_source.rows() != adj.source_count) throw ShapeError("point_mix: feature rows != map sources");
  Tape<Scalar>& t = *x_source.tape;
  const EdgeSet edges = make_edges(adj);
  Var<Scalar> key = gather_rows(apply(p.g1, x_source), edges.source);
  if (p.positional_encoding) {
    const Var<Scalar> pe = apply(p.delta, t.constant(edge_offsets<Scalar>(p_query, p_source, edges)));
    key = concat_cols(key, pe);
  }
  const Var<Scalar> scores = apply(p.g2, key);
  const Var<Scalar> weights = segment_softmax(scores, edges.offsets);
  const Var<Scalar> values = gather_rows(apply(p.g3, x_source), edges.source);
  if (trace != nullptr) *trace = MixTrace<Scalar>{scores, weights};
  return scatter_add(scale_rows(values, weights), edges.query, edges.queries);
}

/// Mixing within each point's own kNN set (queries = sources).
template <typename Scalar>
Var<Scalar> intra_set_mix(Var<Scalar> x, const Points& positions, const NeighborMap& m,
                          const PointMixerParams& p, MixTrace<Scalar>* trace = nullptr) {
  if (m.query_count() != positions.rows() || m.source_count != positions.rows())
    throw GeometryError("intra_set_mix: map must be built over the same point set");
  return point_mix(x, positions, positions, as_adjacency(m), p, trace);
}

/// Mixing over the sets that contain each point, via the inverse map.
template <typename Scalar>
Var<Scalar> inter_set_mix(Var<Scalar> x, const Points& positions, const InverseNeighborMap& inv,
                          const PointMixerParams& p, MixTrace<Scalar>* trace = nullptr) {
  if (inv.rows() != positions.rows() || inv.source_count != positions.rows())
    throw GeometryError("inter_set_mix: inverse map must be built over the same point set");
  for (Index r = 0; r < inv.rows(); ++r)
    if (inv.row_size(r) == 0)
      throw GeometryError("inter_set_mix: empty inverse row " + std::to_string(r) +
                          " (map was not built over a single level)");
  return point_mix(x, positions, positions, inv, p, trace);
}

/// Sampled queries P_s aggregate their original-level neighbors in P_o.
template <typename Scalar>
Var<Scalar> hier_down_mix(Var<Scalar> x_o, const Points& p_o, const Points& p_s,
                          const NeighborMap& m_os, const PointMixerParams& p) {
  if (m_os.query_count() != p_s.rows() || m_os.source_count != p_o.rows())
    throw GeometryError("hier_down_mix: map does not connect P_s to P_o");
  return point_mix(x_o, p_s, p_o, as_adjacency(m_os), p);
}

/// The inverse of a down-sampling map with each empty row replaced by the
/// single entry nearest[i] (a position in the sampled set).
inline Adjacency upsampling_adjacency(const InverseNeighborMap& inv_os, std::span<const Index> nearest) {
  if (static_cast<Index>(nearest.size()) != inv_os.rows())
    throw GeometryError("upsampling_adjacency: one fallback per original point required");
  Adjacency a;
  a.source_count = inv_os.source_count;
  a.offsets.assign(1, 0);
  a.offsets.reserve(inv_os.offsets.size());
  a.indices.reserve(inv_os.indices.size());
  for (Index r = 0; r < inv_os.rows(); ++r) {
    if (inv_os.row_size(r) == 0) {
      a.indices.push_back(nearest[r]);
    } else {
      for (Index j : inv_os.row(r)) a.indices.push_back(j);
    }
    a.offsets.push_back(static_cast<Index>(a.indices.size()));
  }
  return a;
}

/// Original points aggregate the sampled points whose down-sampling sets held
/// them; the result is added to `skip`. Points held by no set fall back to
/// their nearest sampled point. When `nearest` is empty the fallback is
/// looked up with knn for the orphaned points only.
template <typename Scalar>
Var<Scalar> hier_up_mix(Var<Scalar> x_s, const Points& p_s, const Points& p_o,
                        const InverseNeighborMap& inv_os, const PointMixerParams& p, Var<Scalar> skip,
                        std::span<const Index> nearest = {}) {
  if (inv_os.rows() != p_o.rows() || inv_os.source_count != p_s.rows())
    throw GeometryError("hier_up_mix: inverse map does not connect P_o to P_s");
  if (p_s.rows() == 0) throw GeometryError("hier_up_mix: no sampled points to fall back on");
  if (skip.rows() != p_o.rows() || skip.cols() != p.channels)
    throw ShapeError("hier_up_mix: skip must be N_o x C");
  std::vector<Index> fallback;
  if (nearest.empty()) {
    fallback.assign(static_cast<std::size_t>(p_o.rows()), 0);
    std::vector<Index> orphans;
    for (Index r = 0; r < inv_os.rows(); ++r)
      if (inv_os.row_size(r) == 0) orphans.push_back(r);
    if (!orphans.empty()) {
      const NeighborMap nn = knn(p_s, gather_points(p_o, orphans), 1);
      for (std::size_t i = 0; i < orphans.size(); ++i) fallback[orphans[i]] = nn.indices[i];
    }
    nearest = fallback;
  }
  const Adjacency up = upsampling_adjacency(inv_os, nearest);
  return add(point_mix(x_s, p_o, p_s, up, p), skip);
}

// ---------------------------------------------------------------------------
// Comparison operators

/// y_i = max_j MLP([x_j; p_i - p_j])
struct MaxPoolParams {
  Mlp mlp;
};

/// y_i = sum_j softmax_j(psi(W1 x_i - W2 x_j + d_ij)) * (W3 x_j + d_ij), softmax per channel.
struct VectorAttentionParams {
  LinearLayer w1, w2, w3;
  Mlp psi;
  Mlp delta;
};

/// Token mixing over a fixed K neighbors, then channel mixing, then the mean
/// over the K tokens.
struct TokenMlpParams {
  Index k = 0;
  LayerNormLayer norm1;
  ParamRef token_w1, token_b1, token_w2, token_b2;  // H x K, 1 x H, K x H, 1 x K
  LayerNormLayer norm2;
  Mlp channel;
  std::optional<Mlp> delta;
};

enum class Variant { Softmax, MaxPool, VectorAttention, TokenMlp };

using VariantParams = std::variant<PointMixerParams, MaxPoolParams, VectorAttentionParams, TokenMlpParams>;

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Softmax: return "softmax";
    case Variant::MaxPool: return "maxpool";
    case Variant::VectorAttention: return "attention";
    case Variant::TokenMlp: return "tokenmlp";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(const std::string& s) {
  for (Variant v : {Variant::Softmax, Variant::MaxPool, Variant::VectorAttention, Variant::TokenMlp})
    if (s == variant_name(v)) return v;
  return std::nullopt;
}

struct VariantOptions {
  PointMixerOptions mixer;
  Index k = 16;                  // TokenMlp token count
  Index token_expansion = 2;     // TokenMlp hidden tokens = expansion * k
  Index channel_expansion = 2;   // TokenMlp channel MLP width factor
  bool token_positional_encoding = false;
};

template <typename Scalar>
VariantParams make_variant(ParamStore<Scalar>& store, const std::string& name, Variant v,
                           const VariantOptions& opt, Rng& rng) {
  const Index c = opt.mixer.channels;
  switch (v) {
    case Variant::Softmax:
      return make_point_mixer(store, name + ".softmax", opt.mixer, rng);
    case Variant::MaxPool:
      return MaxPoolParams{make_mlp(store, name + ".maxpool", {c + 3, c, c}, rng)};
    case Variant::VectorAttention: {
      VectorAttentionParams a;
      a.w1 = make_linear(store, name + ".attn.w1", c, c, rng);
      a.w2 = make_linear(store, name + ".attn.w2", c, c, rng);
      a.w3 = make_linear(store, name + ".attn.w3", c, c, rng);
      a.psi = make_mlp(store, name + ".attn.psi", {c, c, c}, rng);
      a.delta = make_mlp(store, name + ".attn.delta", {3, c, c}, rng);
      return a;
    }
    case Variant::TokenMlp: {
      if (opt.k < 1) throw ShapeError("token MLP needs a fixed K >= 1");
      TokenMlpParams tm;
      tm.k = opt.k;
      const Index h = opt.token_expansion * opt.k;
      tm.norm1 = make_layernorm(store, name + ".token.norm1", c);
      LinearLayer l1 = make_linear(store, name + ".token.mix1", opt.k, h, rng);
      LinearLayer l2 = make_linear(store, name + ".token.mix2", h, opt.k, rng);
      tm.token_w1 = l1.weight;
      tm.token_b1 = l1.bias;
      tm.token_w2 = l2.weight;
      tm.token_b2 = l2.bias;
      tm.norm2 = make_layernorm(store, name + ".token.norm2", c);
      tm.channel = make_mlp(store, name + ".token.channel", {c, opt.channel_expansion * c, c}, rng);
      if (opt.token_positional_encoding) tm.delta = make_mlp(store, name + ".token.delta", {3, c, c}, rng);
      return tm;
    }
  }
  throw ShapeError("unknown variant");
}

namespace detail {

template <typename Scalar>
Var<Scalar> maxpool_mix(Var<Scalar> x, const Points& pq, const Points& ps, const EdgeSet& edges,
                        const MaxPoolParams& p) {
  Tape<Scalar>& t = *x.tape;
  const Var<Scalar> rel = t.constant(edge_offsets<Scalar>(pq, ps, edges));
  return segment_max(apply(p.mlp, concat_cols(gather_rows(x, edges.source), rel)), edges.offsets);
}

template <typename Scalar>
Var<Scalar> attention_mix(Var<Scalar> x, const Points& pq, const Points& ps, const EdgeSet& edges,
                          const VectorAttentionParams& p) {
  if (edges.queries != x.rows()) throw ShapeError("vector attention needs query features (same-level map)");
  Tape<Scalar>& t = *x.tape;
  const Var<Scalar> d = apply(p.delta, t.constant(edge_offsets<Scalar>(pq, ps, edges)));
  const Var<Scalar> q = gather_rows(apply(p.w1, x), edges.query);
  const Var<Scalar> k = gather_rows(apply(p.w2, x), edges.source);
  const Var<Scalar> v = add(gather_rows(apply(p.w3, x), edges.source), d);
  const Var<Scalar> a = segment_softmax(apply(p.psi, add(sub(q, k), d)), edges.offsets);
  return scatter_add(mul(a, v), edges.query, edges.queries);
}

template <typename Scalar>
Var<Scalar> token_mix(Var<Scalar> x, const Points& pq, const Points& ps, const Adjacency& adj,
                      const EdgeSet& edges, const TokenMlpParams& p) {
  if (adj.fixed_k != p.k)
    throw CardinalityError("token-mixing MLP built for K=" + std::to_string(p.k) +
                           " cannot take a neighborhood of " +
                           (adj.fixed_k == 0 ? std::string("variable size")
                                             : "size " + std::to_string(adj.fixed_k)));
  Tape<Scalar>& t = *x.tape;
  Var<Scalar> tokens = gather_rows(x, edges.source);
  if (p.delta) tokens = add(tokens, apply(*p.delta, t.constant(edge_offsets<Scalar>(pq, ps, edges))));
  const Var<Scalar> hidden =
      gelu(group_linear(apply(p.norm1, tokens), t.param(p.token_w1), t.param(p.token_b1)));
  const Var<Scalar> mixed = add(tokens, group_linear(hidden, t.param(p.token_w2), t.param(p.token_b2)));
  const Var<Scalar> out = add(mixed, apply(p.channel, apply(p.norm2, mixed)));
  return scale(scatter_add(out, edges.query, edges.queries), Scalar(1) / static_cast<Scalar>(p.k));
}

}  // namespace detail

/// Any operator over an explicit neighborhood. x holds source features.
template <typename Scalar>
Var<Scalar> variant_mix(Var<Scalar> x, const Points& p_query, const Points& p_source, const Adjacency& adj,
                        const VariantParams& v) {
  if (x.rows() != adj.source_count) throw ShapeError("variant_mix: feature rows != map sources");
  if (const auto* pm = std::get_if<PointMixerParams>(&v)) return point_mix(x, p_query, p_source, adj, *pm);
  const EdgeSet edges = make_edges(adj);
  if (const auto* mp = std::get_if<MaxPoolParams>(&v)) return detail::maxpool_mix(x, p_query, p_source, edges, *mp);
  if (const auto* va = std::get_if<VectorAttentionParams>(&v))
    return detail::attention_mix(x, p_query, p_source, edges, *va);
  return detail::token_mix(x, p_query, p_source, adj, edges, std::get<TokenMlpParams>(v));
}

/// Pre-norm block: x' = x + mix(LN(x)), y = x' + MLP(LN(x')).
/// Without a mix operator only the channel half runs.
struct MixerBlockParams {
  LayerNormLayer norm1;
  std::optional<VariantParams> mix;
  LayerNormLayer norm2;
  Mlp channel;
  Index channels = 0;
};

template <typename Scalar>
MixerBlockParams make_mixer_block(ParamStore<Scalar>& store, const std::string& name, Index channels,
                                  std::optional<Variant> variant, const VariantOptions& opt,
                                  Index expansion, Rng& rng) {
  MixerBlockParams b;
  b.channels = channels;
  if (variant) {
    b.norm1 = make_layernorm(store, name + ".norm1", channels);
    VariantOptions o = opt;
    o.mixer.channels = channels;
    b.mix = make_variant(store, name + ".mix", *variant, o, rng);
  }
  b.norm2 = make_layernorm(store, name + ".norm2", channels);
  b.channel = make_mlp(store, name + ".channel", {channels, expansion * channels, channels}, rng);
  return b;
}

template <typename Scalar>
Var<Scalar> mixer_block(Var<Scalar> x, const Points& positions, const Adjacency& adj,
                        const MixerBlockParams& b) {
  if (x.cols() != b.channels) throw ShapeError("mixer_block: width mismatch");
  Var<Scalar> h = x;
  if (b.mix) h = add(x, variant_mix(apply(b.norm1, x), positions, positions, adj, *b.mix));
  return add(h, apply(b.channel, apply(b.norm2, h)));
}

}  // namespace pmx
