// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pointmixer/cli/checks.hpp"
#include "pointmixer/cli/commands.hpp"
#include "pointmixer/cli/rfield.hpp"

using namespace pmx;
using Mat = MatrixX<double>;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat random_matrix(Rng& rng, Index r, Index c) {
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Mat permute_rows(const Mat& m, const std::vector<Index>& perm) {
  Mat out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

Index position_of(const std::vector<Index>& perm, Index original) {
  return static_cast<Index>(std::find(perm.begin(), perm.end(), original) - perm.begin());
}

Adjacency shuffle_rows(Adjacency a, Rng& rng) {
  for (Index q = 0; q < a.rows(); ++q) {
    std::vector<Index> row(a.row(q).begin(), a.row(q).end());
    rng.shuffle(row);
    std::copy(row.begin(), row.end(), a.indices.begin() + a.offsets[q]);
  }
  return a;
}

template <typename F>
Mat eval(ParamStore<double>& s, F&& f) {
  Tape<double> t(s);
  return f(t).value();
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  int bad_knn = 0, bad_inv = 0, bad_fps = 0;
  for (int i = 0; i < 200; ++i) {
    const Index n = 2 + static_cast<Index>(rng.below(511));
    const Index q = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(n, 32))));
    // a coarse grid makes distance ties common
    Points src = oracle::random_points(rng, n), qry = oracle::random_points(rng, q);
    if (i % 2 == 1) {
      src = (src * 4).array().round() / 4;
      qry = (qry * 4).array().round() / 4;
    }
    const NeighborMap m = knn(src, qry, k);
    const auto expect = oracle::knn(src, qry, k);
    if (oracle::rows_of(m) != expect) ++bad_knn;
    if (oracle::rows_of(invert_map(m)) != oracle::invert(expect, n)) ++bad_inv;
    const Index m_fps = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(n, 64))));
    const Index start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    if (fps(src, m_fps, start) != oracle::fps(src, m_fps, start)) ++bad_fps;
  }
  const bool ok = bad_knn + bad_inv + bad_fps == 0 && seconds_since(t0) < 60;
  return {ok, "200 instances each, mismatches knn=" + std::to_string(bad_knn) + " invert_map=" +
                  std::to_string(bad_inv) + " fps=" + std::to_string(bad_fps)};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string where;
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (const auto& r : gradcheck_suite(1e-5, seed, true)) {
      ++checks;
      if (r.max_error >= worst) {
        worst = r.max_error;
        where = r.name + " seed " + std::to_string(seed);
      }
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 300,
          std::to_string(checks) + " checks over 10 seeds, max rel error " + fmt("%.2e", worst) + " (" + where + ")"};
}

Outcome permutation() {
  Rng rng(303);
  const Index n = 40, k = 8, c = 6;
  double invariant_err = 0, equivariant_err = 0, token_change = 0;

  VariantOptions vo;
  vo.mixer.channels = c;
  vo.k = k;
  ParamStore<double> s;
  std::vector<VariantParams> sym;
  for (Variant v : {Variant::Softmax, Variant::MaxPool, Variant::VectorAttention})
    sym.push_back(make_variant(s, "v" + std::string(variant_name(v)), v, vo, rng));
  const VariantParams token = make_variant(s, "token", Variant::TokenMlp, vo, rng);
  const PointMixerParams inter = make_point_mixer(s, "inter", vo.mixer, rng);
  const MixerBlockParams block = make_mixer_block(s, "block", c, Variant::Softmax, vo, 2, rng);

  NetworkConfig cls;
  cls.levels = {{8, 1, 1.0}, {12, 1, 0.5}};
  cls.k = k;
  cls.head = ClassificationHead{3, 0.0};
  NetworkConfig dense = cls;
  dense.head = DenseHead{2};
  auto cnet = build_network<double>(cls, 7);
  auto dnet = build_network<double>(dense, 8);

  const Points p = oracle::random_points(rng, n);
  const Mat x = random_matrix(rng, n, c);
  const Adjacency adj = as_adjacency(knn(p, p, k));
  const Adjacency inv = invert_map(knn(p, p, k));
  std::vector<Mat> base;
  for (const auto& v : sym) base.push_back(eval(s, [&](auto& t) { return variant_mix(t.constant(x), p, p, adj, v); }));
  const Mat token_base = eval(s, [&](auto& t) { return variant_mix(t.constant(x), p, p, adj, token); });
  const Mat inter_base = eval(s, [&](auto& t) { return inter_set_mix(t.constant(x), p, inv, inter); });
  const Mat block_base = eval(s, [&](auto& t) { return mixer_block(t.constant(x), p, adj, block); });
  const PointCloud cloud(p);
  const Mat logits = forward_classify(cnet, cloud);
  const Mat per_point = forward_dense(dnet, cloud);

  for (int trial = 0; trial < 50; ++trial) {
    // set order inside each neighborhood
    const Adjacency sadj = shuffle_rows(adj, rng), sinv = shuffle_rows(inv, rng);
    for (std::size_t i = 0; i < sym.size(); ++i) {
      const Mat y = eval(s, [&](auto& t) { return variant_mix(t.constant(x), p, p, sadj, sym[i]); });
      invariant_err = std::max(invariant_err, (y - base[i]).cwiseAbs().maxCoeff());
    }
    const Mat yi = eval(s, [&](auto& t) { return inter_set_mix(t.constant(x), p, sinv, inter); });
    invariant_err = std::max(invariant_err, (yi - inter_base).cwiseAbs().maxCoeff());
    const Mat yt = eval(s, [&](auto& t) { return variant_mix(t.constant(x), p, p, sadj, token); });
    token_change = std::max(token_change, (yt - token_base).cwiseAbs().maxCoeff());

    // point order of the whole cloud
    const auto perm = oracle::random_permutation(rng, n);
    const Points pp = gather_points(p, perm);
    const Mat px = permute_rows(x, perm);
    const Mat yb = eval(s, [&](auto& t) {
      return mixer_block(t.constant(px), pp, as_adjacency(knn(pp, pp, k)), block);
    });
    equivariant_err = std::max(equivariant_err, (yb - permute_rows(block_base, perm)).cwiseAbs().maxCoeff());
    cnet.config.fps_start = dnet.config.fps_start = position_of(perm, 0);
    const PointCloud pc(pp);
    invariant_err = std::max(invariant_err, (forward_classify(cnet, pc) - logits).cwiseAbs().maxCoeff());
    equivariant_err =
        std::max(equivariant_err, (forward_dense(dnet, pc) - permute_rows(per_point, perm)).cwiseAbs().maxCoeff());
    cnet.config.fps_start = dnet.config.fps_start = 0;
  }
  const bool ok = invariant_err < 1e-9 && equivariant_err < 1e-9 && token_change > 1e-3;
  return {ok, "50 permutations, invariance err " + fmt("%.1e", invariant_err) + ", equivariance err " +
                  fmt("%.1e", equivariant_err) + ", token-MLP max change " + fmt("%.3f", token_change)};
}

Outcome softmax_normalization() {
  Rng rng(404);
  double worst = 0;
  Index segments = 0, empty = 0, sizes_seen = 0;
  std::vector<char> seen_size(512, 0);
  ParamStore<double> s;
  PointMixerOptions po;
  po.channels = 5;
  const PointMixerParams pm = make_point_mixer(s, "mix", po, rng);
  for (int batch = 0; batch < 100; ++batch) {
    const Index n = 10 + static_cast<Index>(rng.below(90));
    const Index k = 1 + static_cast<Index>(rng.below(12));
    const Points p = oracle::random_points(rng, n);
    const Adjacency inv = invert_map(knn(p, p, k));
    for (bool via_layer : {false, true}) {
      Tape<double> t(s);
      Mat w;
      if (via_layer) {
        MixTrace<double> trace;
        point_mix(t.constant(random_matrix(rng, n, 5)), p, p, inv, pm, &trace);
        w = trace.weights.value();
      } else {
        Mat scores = random_matrix(rng, inv.edges(), 3) * 20.0;
        w = segment_softmax(t.constant(scores), make_index_list(inv.offsets)).value();
      }
      for (Index q = 0; q < inv.rows(); ++q) {
        const Index size = inv.row_size(q);
        if (size == 0) {
          ++empty;
          continue;
        }
        if (!via_layer && !seen_size[static_cast<std::size_t>(size)]) {
          seen_size[static_cast<std::size_t>(size)] = 1;
          ++sizes_seen;
        }
        ++segments;
        for (Index col = 0; col < w.cols(); ++col)
          worst = std::max(worst, std::abs(w.block(inv.offsets[q], col, size, 1).sum() - 1.0));
      }
    }
  }
  return {worst < 1e-9, std::to_string(segments) + " inverse-row segments (" + std::to_string(sizes_seen) +
                            " distinct sizes, " + std::to_string(empty) + " empty rows skipped), max |sum-1| " +
                            fmt("%.1e", worst)};
}

Outcome symmetric_decoder() {
  Rng rng(505);
  NetworkConfig c;
  c.levels = {{8, 1, 1.0}, {12, 1, 0.25}, {16, 1, 0.25}};
  c.k = 8;
  c.head = DenseHead{2};
  const PointCloud cloud(oracle::random_points(rng, 128));
  const auto g = prepare_geometry(cloud.positions, c);

  ForwardTrace hier;
  forward_dense(build_network<double>(c, 1), cloud, &hier);
  bool maps_equal = hier.decoder_maps.size() == static_cast<std::size_t>(g.levels() - 1);
  for (std::size_t i = 0; maps_equal && i < hier.decoder_maps.size(); ++i) {
    const Index level = g.levels() - 1 - static_cast<Index>(i);  // coarse to fine
    maps_equal = hier.decoder_maps[i] == invert_map(g.hierarchy.levels[level].map);
  }
  c.use_hier = false;
  ForwardTrace base;
  forward_dense(build_network<double>(c, 1), cloud, &base);
  const bool ok = hier.knn_calls_decoder == 0 && base.knn_calls_decoder > 0 && maps_equal;
  return {ok, "decoder kNN calls: hierarchical " + std::to_string(hier.knn_calls_decoder) + ", 3-NN baseline " +
                  std::to_string(base.knn_calls_decoder) + "; decoder maps equal inverted encoder maps: " +
                  (maps_equal ? "yes" : "no")};
}

Outcome parameter_efficiency() {
  RunConfig cfg;
  cfg.variant = Variant::Softmax;
  const Index soft = param_count(build_network<double>(network_config(cfg), 1));
  cfg.variant = Variant::TokenMlp;
  const Index token = param_count(build_network<double>(network_config(cfg), 1));
  return {soft < token, "default config: softmax " + std::to_string(soft) + " vs token-MLP " + std::to_string(token) +
                            " parameters, ratio " + fmt("%.4f", static_cast<double>(soft) / static_cast<double>(token))};
}

Outcome learning() {
  // classification at the CLI defaults
  RunConfig cls;
  const auto t0 = std::chrono::steady_clock::now();
  Dataset data = load_run_data(cls);
  auto net = build_network<double>(network_config(cls), cls.net_seed);
  TrainOptions topt = train_options(cls);
  Index first = -1;
  topt.on_epoch = [&](const EpochLog& e) {
    if (first < 0 && e.metrics.at("oa") >= 0.90) first = e.epoch + 1;
  };
  train(net, data, topt);
  const double oa = evaluate(net, data.test, Task::Classification, cls.data.classes).at("oa");
  const double cls_secs = seconds_since(t0);

  // two-part segmentation, fewer clouds and epochs
  RunConfig seg;
  seg.data.task = Task::Segmentation;
  seg.data.classes = 2;
  seg.data.train_clouds = 200;
  seg.data.test_clouds = 50;
  seg.epochs = 10;
  Dataset sdata = load_run_data(seg);
  auto snet = build_network<double>(network_config(seg), seg.net_seed);
  TrainOptions sopt = train_options(seg);
  sopt.evaluate_each_epoch = false;
  train(snet, sdata, sopt);
  const double miou = evaluate(snet, sdata.test, Task::Segmentation, 2).at("miou");

  const bool ok = oa >= 0.90 && cls_secs < 600 && miou >= 0.80;
  return {ok, "cls test OA " + fmt("%.4f", oa) + " after " + std::to_string(cls.epochs) + " epochs (>= 0.90 from epoch " +
                  std::to_string(first) + ", " + fmt("%.0f", cls_secs) + " s); seg test mIoU " + fmt("%.4f", miou) +
                  " after " + std::to_string(seg.epochs) + " epochs"};
}

Outcome ablation() {
  RunConfig cfg;
  cfg.data.task = Task::Segmentation;
  cfg.data.classes = 2;
  cfg.data.train_clouds = 80;
  cfg.data.test_clouds = 20;
  cfg.epochs = 3;
  const Dataset data = load_run_data(cfg);
  const auto rows = run_ablation(cfg, data);
  std::printf("%s", format_ablation(rows).c_str());
  double full = -1, intra_only = -1;
  bool finite = true;
  for (const auto& r : rows) {
    for (const auto& [name, v] : r.metrics.values) finite = finite && std::isfinite(v);
    if (r.intra && r.inter && r.hier) full = r.metrics.at("miou");
    if (r.intra && !r.inter && !r.hier) intra_only = r.metrics.at("miou");
  }
  const bool ok = rows.size() == 8 && finite && full >= intra_only - 0.02;
  return {ok, std::to_string(rows.size()) + " rows; full mIoU " + fmt("%.4f", full) + " vs intra-only " +
                  fmt("%.4f", intra_only)};
}

Outcome check_receptive_field() {
  std::ostringstream out, err;
  const int code = run_cli({"rfield", "--hierarchies", "50", "--points", "512", "--k", "16", "--ratio", "0.25"}, out,
                           err);
  const RfieldSummary s = rfield_analysis(50, 512, 16, 0.25, 0);
  return {code == 0 && s.ok(), "50 hierarchies, mean influence set: inverse-map upsampling " +
                                   fmt("%.2f", s.mean_hier_up) + " vs trilinear " + fmt("%.2f", s.mean_trilinear) +
                                   ", " + std::to_string(s.hier_failures) + " hierarchies below"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "pmx_acceptance_determinism";
  fs::remove_all(root);
  bool same = true;
  std::string detail;
  for (const std::string task : {"cls", "seg"}) {
    std::string outputs[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = root / (task + std::to_string(run));
      std::ostringstream out, err;
      std::vector<std::string> args{"train", "--out", dir.string(), "--quiet", "--set", "data.task=" + task,
                                    "--set", "data.classes=" + std::string(task == "cls" ? "3" : "2"),
                                    "--set", "data.train_clouds=40", "--set", "data.test_clouds=10",
                                    "--set", "train.epochs=3"};
      if (run_cli(args, out, err) != 0) return {false, task + " training failed: " + err.str()};
      std::ostringstream eout;
      if (run_cli({"eval", "--checkpoint", (dir / "checkpoint.pmix").string()}, eout, err) != 0)
        return {false, task + " eval failed: " + err.str()};
      outputs[run] = slurp(dir / "checkpoint.pmix") + slurp(dir / "state.pmix") + slurp(dir / "log.csv") + eout.str();
    }
    same = same && outputs[0] == outputs[1];
    detail += task + (outputs[0] == outputs[1] ? " identical" : " DIFFER") + " (" +
              std::to_string(outputs[0].size()) + " bytes compared); ";
  }
  fs::remove_all(root);
  return {same, detail + "checkpoint, state, log and eval report"};
}

}  // namespace

int main() {
  report(1, "oracle equivalence", oracle_equivalence);
  report(2, "gradient suite", gradient_suite);
  report(3, "permutation invariance/equivariance", permutation);
  report(4, "softmax normalization", softmax_normalization);
  report(5, "symmetric decoder", symmetric_decoder);
  report(6, "parameter efficiency", parameter_efficiency);
  report(7, "desk-scale learning", learning);
  report(8, "ablation harness", ablation);
  report(9, "receptive field", check_receptive_field);
  report(10, "determinism", determinism);
  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "PASS" : "FAIL", failures);
  return failures == 0 ? 0 : 1;
}
