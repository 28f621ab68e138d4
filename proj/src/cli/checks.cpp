#include "pointmixer/cli/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "pointmixer/net.hpp"

namespace pmx {

namespace {

using Build = std::function<Var<double>(Tape<double>&)>;

MatrixX<double> normal_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  MatrixX<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

Points random_cloud(Rng& rng, Index n) {
  Points p(n, 3);
  for (Index i = 0; i < n; ++i) p.row(i) << rng.uniform(), rng.uniform(), rng.uniform();
  return p;
}

// <G, f(params)> differentiated by the tape versus central differences.
SuiteResult seeded_check(const std::string& name, bool primitive, ParamStore<double>& store, const Build& f,
                         double h, Rng& rng, Index max_per_param) {
  MatrixX<double> seed;
  store.zero_grad();
  {
    Tape<double> tape(store);
    const Var<double> y = f(tape);
    seed = normal_matrix(rng, y.rows(), y.cols());
    tape.backward(y, seed);
    tape.accumulate_into(store);
  }
  auto project = [&]() {
    Tape<double> tape(store);
    return f(tape).value().cwiseProduct(seed).sum();
  };
  SuiteResult r;
  r.name = name;
  r.primitive = primitive;
  for (auto& p : store) {
    const Index n = p.size();
    const Index stride = (max_per_param > 0 && n > max_per_param) ? n / max_per_param : 1;
    for (Index i = 0; i < n; i += stride) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + h;
      const double plus = project();
      x = saved - h;
      const double minus = project();
      x = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double analytic = p.grad.data()[i];
      const double err = std::isfinite(analytic) ? std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric))
                                                 : std::numeric_limits<double>::infinity();
      ++r.coordinates;
      if (err >= r.max_error) {
        r.max_error = err;
        r.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  store.zero_grad();
  return r;
}

struct OpCase {
  std::string name;
  std::vector<std::pair<Index, Index>> shapes;  // one parameter per input
  std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)> f;
};

std::vector<OpCase> op_cases() {
  // Segments of length 3, 0, 1 and 3 cover empty and singleton rows.
  const auto offsets = make_index_list({0, 3, 3, 4, 7});
  const auto rows = make_index_list({0, 2, 2, 3, 1, 0});
  using V = std::vector<Var<double>>;
  return {
      {"add", {{4, 3}, {4, 3}}, [](auto&, const V& v) { return add(v[0], v[1]); }},
      {"sub", {{4, 3}, {4, 3}}, [](auto&, const V& v) { return sub(v[0], v[1]); }},
      {"mul", {{4, 3}, {4, 3}}, [](auto&, const V& v) { return mul(v[0], v[1]); }},
      {"scale", {{4, 3}}, [](auto&, const V& v) { return scale(v[0], 1.7); }},
      {"scale_rows", {{5, 3}, {5, 1}}, [](auto&, const V& v) { return scale_rows(v[0], v[1]); }},
      {"linear", {{5, 3}, {4, 3}, {1, 4}}, [](auto&, const V& v) { return linear(v[0], v[1], v[2]); }},
      {"gelu", {{5, 3}}, [](auto&, const V& v) { return gelu(v[0]); }},
      {"layer_norm", {{5, 4}, {1, 4}, {1, 4}}, [](auto&, const V& v) { return layer_norm(v[0], v[1], v[2]); }},
      {"gather_rows", {{4, 3}}, [rows](auto&, const V& v) { return gather_rows(v[0], rows); }},
      {"scatter_add", {{6, 3}}, [rows](auto&, const V& v) { return scatter_add(v[0], rows, 5); }},
      {"segment_softmax", {{7, 2}}, [offsets](auto&, const V& v) { return segment_softmax(v[0], offsets); }},
      {"segment_max", {{7, 3}}, [offsets](auto&, const V& v) { return segment_max(v[0], offsets); }},
      {"concat_cols", {{4, 2}, {4, 3}}, [](auto&, const V& v) { return concat_cols(v[0], v[1]); }},
      {"mean_rows", {{5, 3}}, [](auto&, const V& v) { return mean_rows(v[0]); }},
      {"sum", {{5, 3}}, [](auto&, const V& v) { return sum(v[0]); }},
      {"group_linear", {{6, 4}, {5, 3}, {1, 5}}, [](auto&, const V& v) { return group_linear(v[0], v[1], v[2]); }},
  };
}

SuiteResult check_network(const std::string& name, bool dense, double h, Rng& rng) {
  NetworkConfig c;
  c.levels = {{8, 1, 1.0}, {12, 1, 0.5}};
  c.k = 6;
  c.head = dense ? HeadSpec{DenseHead{2}} : HeadSpec{ClassificationHead{3, 0.0}};
  auto net = build_network<double>(c, rng);
  const PointCloud cloud(random_cloud(rng, 24));
  const CloudGeometry g = prepare_geometry(cloud.positions, c);
  const Build f = [&](Tape<double>& t) {
    return dense ? predict_dense(net, t, cloud, g) : classify(net, t, cloud, g);
  };
  return seeded_check(name, false, net.params, f, h, rng, 6);
}

}  // namespace

std::vector<SuiteResult> gradcheck_suite(double h, std::uint64_t seed, bool networks) {
  Rng rng(seed);
  std::vector<SuiteResult> out;

  for (const auto& op : op_cases()) {
    ParamStore<double> s;
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < op.shapes.size(); ++i)
      refs.push_back(s.add("in" + std::to_string(i), normal_matrix(rng, op.shapes[i].first, op.shapes[i].second)));
    const Build f = [&](Tape<double>& t) {
      std::vector<Var<double>> in;
      for (auto r : refs) in.push_back(t.param(r));
      return op.f(t, in);
    };
    out.push_back(seeded_check(op.name, true, s, f, h, rng, 0));
  }

  const Index n = 20, k = 5, c = 8;
  const Points p = random_cloud(rng, n);
  const NeighborMap m = knn(p, p, k);
  const Adjacency intra = as_adjacency(m);
  const InverseNeighborMap inter = invert_map(m);
  const HierarchyLevel lvl = build_level(p, 0.4, k);

  auto layer = [&](const std::string& name, auto&& make, auto&& run) {
    ParamStore<double> s;
    const ParamRef x = s.add("x", normal_matrix(rng, n, c));
    const ParamRef xs = s.add("x_sampled", normal_matrix(rng, lvl.points.rows(), c));
    auto params = make(s);
    const Build f = [&](Tape<double>& t) { return run(t, t.param(x), t.param(xs), params); };
    out.push_back(seeded_check(name, false, s, f, h, rng, 8));
  };

  PointMixerOptions po;
  po.channels = c;
  VariantOptions vo;
  vo.mixer = po;
  vo.k = k;
  for (Variant v : {Variant::Softmax, Variant::MaxPool, Variant::VectorAttention, Variant::TokenMlp}) {
    layer(std::string("intra_") + variant_name(v),
          [&](ParamStore<double>& s) { return make_variant(s, "mix", v, vo, rng); },
          [&](Tape<double>&, Var<double> x, Var<double>, const VariantParams& vp) {
            return variant_mix(x, p, p, intra, vp);
          });
  }
  auto mixer = [&](ParamStore<double>& s) { return make_point_mixer(s, "mix", po, rng); };
  layer("inter_softmax", mixer, [&](Tape<double>&, Var<double> x, Var<double>, const PointMixerParams& pm) {
    return inter_set_mix(x, p, inter, pm);
  });
  layer("hier_down", mixer, [&](Tape<double>&, Var<double> x, Var<double>, const PointMixerParams& pm) {
    return hier_down_mix(x, p, lvl.points, lvl.map, pm);
  });
  layer("hier_up", mixer, [&](Tape<double>&, Var<double> x, Var<double> xs, const PointMixerParams& pm) {
    return hier_up_mix(xs, lvl.points, p, lvl.inverse, pm, x, lvl.nearest_sampled);
  });
  layer("mixer_block",
        [&](ParamStore<double>& s) { return make_mixer_block(s, "block", c, Variant::Softmax, vo, 2, rng); },
        [&](Tape<double>&, Var<double> x, Var<double>, const MixerBlockParams& b) {
          return mixer_block(x, p, intra, b);
        });

  if (networks) {
    out.push_back(check_network("network_cls", false, h, rng));
    out.push_back(check_network("network_dense", true, h, rng));
  }
  return out;
}

namespace {

template <typename Scalar>
BenchRow bench_one(Variant v, const BenchOptions& opt) {
  Rng rng(opt.seed);
  const Points p = random_cloud(rng, opt.points);
  const Adjacency adj = as_adjacency(knn(p, p, std::min(opt.k, opt.points)));
  ParamStore<Scalar> s;
  VariantOptions vo;
  vo.mixer.channels = opt.channels;
  vo.k = std::min(opt.k, opt.points);
  const VariantParams vp = make_variant(s, "mix", v, vo, rng);
  BenchRow row;
  row.variant = v;
  row.params = s.scalar_count();
  const MatrixX<Scalar> x = normal_matrix(rng, opt.points, opt.channels).template cast<Scalar>();
  std::vector<double> ms;
  for (Index it = 0; it < std::max<Index>(1, opt.iterations); ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    Tape<Scalar> tape(s);
    const Var<Scalar> y = variant_mix(tape.variable(x), p, p, adj, vp);
    tape.backward(y, MatrixX<Scalar>::Ones(y.rows(), y.cols()));
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    row.peak_bytes = std::max(row.peak_bytes, tape.peak_bytes());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  row.median_ms = ms.size() % 2 == 1 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return row;
}

}  // namespace

std::vector<BenchRow> bench_variants(const BenchOptions& opt) {
  if (opt.points < 1 || opt.k < 1 || opt.channels < 1) throw ShapeError("bench: sizes must be positive");
  std::vector<BenchRow> rows;
  for (Variant v : {Variant::MaxPool, Variant::VectorAttention, Variant::Softmax, Variant::TokenMlp})
    rows.push_back(opt.single_precision ? bench_one<float>(v, opt) : bench_one<double>(v, opt));
  return rows;
}

}  // namespace pmx
