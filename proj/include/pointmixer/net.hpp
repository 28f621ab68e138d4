#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pointmixer/geom.hpp"
#include "pointmixer/mixer.hpp"

namespace pmx {

struct LevelSpec {
  Index width = 32;
  Index blocks = 1;
  double ratio = 0.25;  // ignored for level 0, which keeps every point
};

struct ClassificationHead {
  Index num_classes = 3;
  double dropout = 0.5;
};

struct DenseHead {
  Index out_channels = 2;
};

using HeadSpec = std::variant<ClassificationHead, DenseHead>;

struct NetworkConfig {
  std::vector<LevelSpec> levels;
  Index feature_channels = 0;  // input features besides xyz
  Index k = 16;
  HeadSpec head = ClassificationHead{};
  bool use_intra = true;
  bool use_inter = true;
  bool use_hier = true;  // false: max-pool down and 3-NN interpolation up
  Variant variant = Variant::Softmax;  // operator for intra-set layers
  Index reduction = 4;
  Index expansion = 2;
  bool positional_encoding = true;
  bool g1_nonlinear = false;
  bool token_positional_encoding = false;
  Index fps_start = 0;

  /// 4 levels of widths 32/64/128/256, one block each, k = 16, ratio 1/4.
  static NetworkConfig desk_default(HeadSpec head, Index feature_channels = 0) {
    NetworkConfig c;
    c.levels = {{32, 1, 1.0}, {64, 1, 0.25}, {128, 1, 0.25}, {256, 1, 0.25}};
    c.head = head;
    c.feature_channels = feature_channels;
    return c;
  }

  bool dense() const { return std::holds_alternative<DenseHead>(head); }

  void validate() const {
    if (levels.empty()) throw ShapeError("network needs at least one level");
    for (const auto& l : levels) {
      if (l.width < 1) throw ShapeError("level widths must be positive");
      if (l.blocks < 0) throw ShapeError("block counts must be non-negative");
      if (!(l.ratio > 0.0 && l.ratio <= 1.0)) throw ShapeError("level ratios must lie in (0, 1]");
    }
    if (k < 1) throw ShapeError("k must be positive");
    if (feature_channels < 0) throw ShapeError("feature channel count must be non-negative");
    if (const auto* c = std::get_if<ClassificationHead>(&head)) {
      if (c->num_classes < 1) throw ShapeError("classification head needs classes");
      if (c->dropout < 0.0 || c->dropout >= 1.0) throw ShapeError("dropout must lie in [0, 1)");
    } else if (std::get<DenseHead>(head).out_channels < 1) {
      throw ShapeError("dense head needs output channels");
    }
  }
};

/// Per-level point sets and index maps for one cloud. Built once and reused
/// by every forward pass over that cloud.
struct CloudGeometry {
  Hierarchy hierarchy;                    // level l >= 1: map from sampled level l into level l-1
  std::vector<NeighborMap> intra;         // same-level kNN per level
  std::vector<InverseNeighborMap> inter;  // their inverses

  Index levels() const { return static_cast<Index>(hierarchy.levels.size()); }
  const Points& points(Index l) const { return hierarchy.levels[l].points; }
};

inline CloudGeometry prepare_geometry(const Points& positions, const NetworkConfig& config) {
  config.validate();
  if (positions.rows() < 1) throw GeometryError("empty cloud");
  CloudGeometry g;
  const auto k_for = [&](Index n) { return std::min(config.k, n); };
  g.hierarchy.levels.push_back(build_level(positions, 1.0, k_for(positions.rows()), 0));
  g.intra.push_back(g.hierarchy.levels[0].map);
  g.inter.push_back(g.hierarchy.levels[0].inverse);
  for (std::size_t l = 1; l < config.levels.size(); ++l) {
    const Points& prev = g.hierarchy.levels.back().points;
    const Index start = l == 1 ? config.fps_start : 0;
    if (start < 0 || start >= prev.rows()) throw GeometryError("fps start outside the cloud");
    g.hierarchy.levels.push_back(build_level(prev, config.levels[l].ratio, k_for(prev.rows()), start));
    const Points& cur = g.hierarchy.levels.back().points;
    g.intra.push_back(knn(cur, cur, k_for(cur.rows())));
    g.inter.push_back(invert_map(g.intra.back()));
  }
  return g;
}

/// Points per level for an n-point cloud.
inline std::vector<Index> level_sizes(const NetworkConfig& config, Index n) {
  std::vector<Index> sizes{n};
  for (std::size_t l = 1; l < config.levels.size(); ++l) sizes.push_back(sampled_size(sizes.back(), config.levels[l].ratio));
  return sizes;
}

enum class Neighborhood { Intra, Inter, None };

struct LevelBlock {
  Neighborhood neighborhood = Neighborhood::None;
  MixerBlockParams params;
};

struct TransitionDown {
  LayerNormLayer norm;
  std::optional<PointMixerParams> mix;  // symmetric design; absent for the max-pool baseline
  LinearLayer proj;                     // width change after mixing, or the baseline's [x; p] MLP
};

struct TransitionUp {
  LayerNormLayer norm;
  LinearLayer proj;                     // coarse width -> fine width
  std::optional<PointMixerParams> mix;  // absent: 3-NN interpolation
};

struct EncoderLevel {
  std::optional<TransitionDown> down;
  std::vector<LevelBlock> blocks;
};

/// decoder[l] lifts level l+1 back to level l.
struct DecoderLevel {
  TransitionUp up;
  std::vector<LevelBlock> blocks;
};

template <typename Scalar>
struct Network {
  NetworkConfig config;
  ParamStore<Scalar> params;
  LinearLayer embed;
  std::vector<EncoderLevel> encoder;
  std::vector<DecoderLevel> decoder;
  LayerNormLayer head_norm;  // final norm of the pre-norm residual stream
  LinearLayer head_hidden;
  LinearLayer head_out;
};

template <typename Scalar>
Index param_count(const ParamStore<Scalar>& store) {
  return store.scalar_count();
}

template <typename Scalar>
Index param_count(const Network<Scalar>& net) {
  return net.params.scalar_count();
}

namespace detail {

template <typename Scalar>
std::vector<LevelBlock> make_level_blocks(ParamStore<Scalar>& store, const std::string& name,
                                          const NetworkConfig& c, Index width, Index count,
                                          Index level_k, Rng& rng) {
  VariantOptions opt;
  opt.mixer.channels = width;
  opt.mixer.reduction = c.reduction;
  opt.mixer.g1_nonlinear = c.g1_nonlinear;
  opt.mixer.positional_encoding = c.positional_encoding;
  opt.k = level_k;
  opt.channel_expansion = c.expansion;
  opt.token_positional_encoding = c.token_positional_encoding;
  std::vector<LevelBlock> blocks;
  for (Index b = 0; b < count; ++b) {
    const std::string prefix = name + ".block" + std::to_string(b);
    if (c.use_intra)
      blocks.push_back({Neighborhood::Intra,
                        make_mixer_block(store, prefix + ".intra", width, c.variant, opt, c.expansion, rng)});
    if (c.use_inter)
      blocks.push_back({Neighborhood::Inter, make_mixer_block(store, prefix + ".inter", width, Variant::Softmax,
                                                              opt, c.expansion, rng)});
    if (!c.use_intra && !c.use_inter)
      blocks.push_back({Neighborhood::None,
                        make_mixer_block(store, prefix + ".channel", width, std::nullopt, opt, c.expansion, rng)});
  }
  return blocks;
}

template <typename Scalar>
PointMixerParams make_transition_mixer(ParamStore<Scalar>& store, const std::string& name,
                                       const NetworkConfig& c, Index width, Rng& rng) {
  PointMixerOptions o;
  o.channels = width;
  o.reduction = c.reduction;
  o.g1_nonlinear = c.g1_nonlinear;
  o.positional_encoding = c.positional_encoding;
  return make_point_mixer(store, name, o, rng);
}

}  // namespace detail

/// Deterministic construction: parameter order, names and initial values are
/// a function of the config and the generator state only.
/// `level_sizes` (points per level) fixes K for token-mixing layers; when
/// empty, K is the configured k at every level.
template <typename Scalar>
Network<Scalar> build_network(const NetworkConfig& config, Rng& rng,
                              const std::vector<Index>& level_sizes = {}) {
  config.validate();
  Network<Scalar> net;
  net.config = config;
  auto& store = net.params;
  const auto& lv = config.levels;
  const auto level_k = [&](std::size_t l) {
    return level_sizes.empty() ? config.k : std::min(config.k, level_sizes.at(l));
  };

  net.embed = make_linear(store, "embed", 3 + config.feature_channels, lv[0].width, rng);
  for (std::size_t l = 0; l < lv.size(); ++l) {
    const std::string name = "enc" + std::to_string(l);
    EncoderLevel e;
    if (l > 0) {
      TransitionDown td;
      td.norm = make_layernorm(store, name + ".down.norm", lv[l - 1].width);
      if (config.use_hier) {
        td.mix = detail::make_transition_mixer(store, name + ".down.mix", config, lv[l - 1].width, rng);
        td.proj = make_linear(store, name + ".down.proj", lv[l - 1].width, lv[l].width, rng);
      } else {
        td.proj = make_linear(store, name + ".down.proj", lv[l - 1].width + 3, lv[l].width, rng);
      }
      e.down = td;
    }
    e.blocks = detail::make_level_blocks(store, name, config, lv[l].width, lv[l].blocks, level_k(l), rng);
    net.encoder.push_back(std::move(e));
  }

  if (config.dense()) {
    for (std::size_t l = 0; l + 1 < lv.size(); ++l) {
      const std::string name = "dec" + std::to_string(l);
      DecoderLevel d;
      d.up.norm = make_layernorm(store, name + ".up.norm", lv[l + 1].width);
      d.up.proj = make_linear(store, name + ".up.proj", lv[l + 1].width, lv[l].width, rng);
      if (config.use_hier) d.up.mix = detail::make_transition_mixer(store, name + ".up.mix", config, lv[l].width, rng);
      d.blocks = detail::make_level_blocks(store, name, config, lv[l].width, lv[l].blocks, level_k(l), rng);
      net.decoder.push_back(std::move(d));
    }
    const Index w0 = lv[0].width;
    net.head_norm = make_layernorm(store, "head.norm", w0);
    net.head_hidden = make_linear(store, "head.hidden", w0, w0, rng);
    net.head_out = make_linear(store, "head.out", w0, std::get<DenseHead>(config.head).out_channels, rng);
  } else {
    const Index wl = lv.back().width;
    net.head_norm = make_layernorm(store, "head.norm", wl);
    net.head_hidden = make_linear(store, "head.hidden", wl, wl, rng);
    net.head_out = make_linear(store, "head.out", wl, std::get<ClassificationHead>(config.head).num_classes, rng);
  }
  return net;
}

template <typename Scalar>
Network<Scalar> build_network(const NetworkConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return build_network<Scalar>(config, rng);
}

enum class Mode { Eval, Train };

/// Instrumentation filled by a forward pass.
struct ForwardTrace {
  std::uint64_t knn_calls_encoder = 0;
  std::uint64_t knn_calls_decoder = 0;
  std::vector<InverseNeighborMap> decoder_maps;  // index structure used per decoder stage, coarse to fine
};

struct ForwardOptions {
  Mode mode = Mode::Eval;
  Rng* dropout_rng = nullptr;  // required in training mode when dropout > 0
  ForwardTrace* trace = nullptr;
};

namespace detail {

template <typename Scalar>
Var<Scalar> run_blocks(const std::vector<LevelBlock>& blocks, Var<Scalar> x, const CloudGeometry& g, Index level) {
  const Points& p = g.points(level);
  for (const auto& b : blocks) {
    switch (b.neighborhood) {
      case Neighborhood::Intra: x = mixer_block(x, p, as_adjacency(g.intra[level]), b.params); break;
      case Neighborhood::Inter: x = mixer_block(x, p, g.inter[level], b.params); break;
      case Neighborhood::None: x = mixer_block(x, p, Adjacency{}, b.params); break;
    }
  }
  return x;
}

template <typename Scalar>
Var<Scalar> transition_down(const TransitionDown& td, Var<Scalar> x, const CloudGeometry& g, Index level) {
  const auto& lvl = g.hierarchy.levels[level];
  const Points& p_o = g.points(level - 1);
  const Var<Scalar> h = apply(td.norm, x);
  if (td.mix) return apply(td.proj, hier_down_mix(h, p_o, lvl.points, lvl.map, *td.mix));
  const EdgeSet edges = make_edges(as_adjacency(lvl.map));
  const Var<Scalar> rel = x.tape->constant(edge_offsets<Scalar>(lvl.points, p_o, edges));
  const Var<Scalar> feat = gelu(apply(td.proj, concat_cols(gather_rows(h, edges.source), rel)));
  return segment_max(feat, edges.offsets);
}

/// 3-NN inverse-square-distance interpolation from coarse to fine points.
template <typename Scalar>
Var<Scalar> interpolate_up(Var<Scalar> x_s, const Points& p_s, const Points& p_o) {
  const NeighborMap nn = knn(p_s, p_o, std::min<Index>(3, p_s.rows()));
  MatrixX<Scalar> w(nn.query_count() * nn.k, 1);
  for (Index i = 0; i < nn.query_count(); ++i) {
    double total = 0.0;
    for (Index n = 0; n < nn.k; ++n) total += 1.0 / (squared_distance(p_o, i, p_s, nn.row(i)[n]) + 1e-8);
    for (Index n = 0; n < nn.k; ++n)
      w(i * nn.k + n, 0) =
          static_cast<Scalar>(1.0 / (squared_distance(p_o, i, p_s, nn.row(i)[n]) + 1e-8) / total);
  }
  const EdgeSet edges = make_edges(as_adjacency(nn));
  const Var<Scalar> gathered = gather_rows(x_s, edges.source);
  return scatter_add(scale_rows(gathered, x_s.tape->constant(std::move(w))), edges.query, edges.queries);
}

template <typename Scalar>
Var<Scalar> embed_input(const Network<Scalar>& net, Tape<Scalar>& tape, const PointCloud& cloud) {
  if (cloud.size() < 1) throw GeometryError("empty cloud");
  if (cloud.channels() != net.config.feature_channels)
    throw ShapeError("cloud has " + std::to_string(cloud.channels()) + " feature channels, network expects " +
                     std::to_string(net.config.feature_channels));
  MatrixX<Scalar> input(cloud.size(), 3 + cloud.channels());
  input.leftCols(3) = cloud.positions.template cast<Scalar>();
  if (cloud.channels() > 0) input.rightCols(cloud.channels()) = cloud.features.template cast<Scalar>();
  return apply(net.embed, tape.constant(std::move(input)));
}

}  // namespace detail

/// Encoder pass; returns the features of every level (the decoder's skips).
template <typename Scalar>
std::vector<Var<Scalar>> encode(const Network<Scalar>& net, Tape<Scalar>& tape, const PointCloud& cloud,
                                const CloudGeometry& g) {
  if (g.levels() != static_cast<Index>(net.encoder.size()))
    throw GeometryError("geometry was prepared for a different number of levels");
  if (g.points(0).rows() != cloud.size()) throw GeometryError("geometry does not match the cloud");
  std::vector<Var<Scalar>> features;
  Var<Scalar> x = detail::embed_input(net, tape, cloud);
  for (Index l = 0; l < g.levels(); ++l) {
    const auto& e = net.encoder[static_cast<std::size_t>(l)];
    if (e.down) x = detail::transition_down(*e.down, x, g, l);
    x = detail::run_blocks(e.blocks, x, g, l);
    features.push_back(x);
  }
  return features;
}

/// Logits (1 x classes): encoder, layer norm and mean pooling over the
/// deepest level, then linear-GELU-dropout-linear.
template <typename Scalar>
Var<Scalar> classify(const Network<Scalar>& net, Tape<Scalar>& tape, const PointCloud& cloud,
                     const CloudGeometry& g, const ForwardOptions& opt = {}) {
  const auto* head = std::get_if<ClassificationHead>(&net.config.head);
  if (head == nullptr) throw ShapeError("network does not have a classification head");
  const std::uint64_t before = knn_call_count();
  const auto features = encode(net, tape, cloud, g);
  if (opt.trace) opt.trace->knn_calls_encoder = knn_call_count() - before;
  Var<Scalar> h = gelu(apply(net.head_hidden, mean_rows(apply(net.head_norm, features.back()))));
  if (opt.mode == Mode::Train && head->dropout > 0.0) {
    if (opt.dropout_rng == nullptr) throw std::invalid_argument("training-mode dropout needs an Rng");
    MatrixX<Scalar> mask(h.rows(), h.cols());
    const double keep = 1.0 - head->dropout;
    for (Index i = 0; i < mask.size(); ++i)
      mask.data()[i] = opt.dropout_rng->uniform() < keep ? static_cast<Scalar>(1.0 / keep) : Scalar(0);
    h = mul(h, tape.constant(std::move(mask)));
  }
  return apply(net.head_out, h);
}

/// Per-point outputs (N x out): encoder, then each decoder stage lifts the
/// coarse features through the inverse of that level's down-sampling map
/// (or 3-NN interpolation in the baseline) and adds the encoder skip.
template <typename Scalar>
Var<Scalar> predict_dense(const Network<Scalar>& net, Tape<Scalar>& tape, const PointCloud& cloud,
                          const CloudGeometry& g, const ForwardOptions& opt = {}) {
  if (!net.config.dense()) throw ShapeError("network does not have a dense head");
  const std::uint64_t before = knn_call_count();
  const auto skips = encode(net, tape, cloud, g);
  const std::uint64_t mid = knn_call_count();
  Var<Scalar> x = skips.back();
  for (Index l = g.levels() - 2; l >= 0; --l) {
    const auto& d = net.decoder[static_cast<std::size_t>(l)];
    const auto& lvl = g.hierarchy.levels[l + 1];
    const Var<Scalar> narrowed = apply(d.up.proj, apply(d.up.norm, x));
    if (d.up.mix) {
      x = hier_up_mix(narrowed, lvl.points, g.points(l), lvl.inverse, *d.up.mix, skips[l], lvl.nearest_sampled);
      if (opt.trace) opt.trace->decoder_maps.push_back(lvl.inverse);
    } else {
      x = add(detail::interpolate_up(narrowed, lvl.points, g.points(l)), skips[l]);
    }
    x = detail::run_blocks(d.blocks, x, g, l);
  }
  if (opt.trace) {
    opt.trace->knn_calls_encoder = mid - before;
    opt.trace->knn_calls_decoder = knn_call_count() - mid;
  }
  return apply(net.head_out, gelu(apply(net.head_hidden, apply(net.head_norm, x))));
}

/// Evaluation-mode logits for one cloud.
template <typename Scalar>
MatrixX<Scalar> forward_classify(const Network<Scalar>& net, const PointCloud& cloud) {
  const CloudGeometry g = prepare_geometry(cloud.positions, net.config);
  Tape<Scalar> tape(net.params);
  return classify(net, tape, cloud, g).value();
}

/// Evaluation-mode per-point outputs for one cloud.
template <typename Scalar>
MatrixX<Scalar> forward_dense(const Network<Scalar>& net, const PointCloud& cloud, ForwardTrace* trace = nullptr) {
  const CloudGeometry g = prepare_geometry(cloud.positions, net.config);
  Tape<Scalar> tape(net.params);
  ForwardOptions opt;
  opt.trace = trace;
  return predict_dense(net, tape, cloud, g, opt).value();
}

}  // namespace pmx
