#include "pointmixer/tasks/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace pmx {

void MetricReport::set(const std::string& name, double v) {
  for (auto& [k, x] : values)
    if (k == name) {
      x = v;
      return;
    }
  values.emplace_back(name, v);
}

double MetricReport::at(const std::string& name) const {
  for (const auto& [k, x] : values)
    if (k == name) return x;
  throw std::out_of_range("no metric named " + name);
}

bool MetricReport::has(const std::string& name) const {
  return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
}

std::string format_double(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string MetricReport::to_kv() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + "=" + format_double(v) + "\n";
  return out;
}

std::string MetricReport::csv_header() const {
  std::string out;
  for (const auto& [k, v] : values) out += (out.empty() ? "" : ",") + k;
  return out;
}

std::string MetricReport::csv_row() const {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i].second);
  return out;
}

LossGrad cross_entropy(const MatrixX<double>& logits, std::span<const int> labels) {
  const Index n = logits.rows(), c = logits.cols();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("cross_entropy: one label per row required");
  if (n == 0) throw ShapeError("cross_entropy: no rows");
  LossGrad out;
  out.grad.resize(n, c);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " out of range");
    const double mx = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    out.loss += std::log(z) - (logits(i, y) - mx);
    out.grad.row(i) = e / z;
    out.grad(i, y) -= 1.0;
  }
  out.loss /= static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

namespace {

void require_points(const Points& a, const Points& b, const char* what) {
  if (a.rows() == 0 || b.rows() == 0) throw GeometryError(std::string(what) + ": empty cloud");
}

// For each row of a: index of and squared distance to the nearest row of b.
std::vector<std::pair<Index, double>> nearest(const Points& a, const Points& b) {
  std::vector<std::pair<Index, double>> out(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) {
    Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < b.rows(); ++j) {
      const double d = (a.row(i) - b.row(j)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    out[i] = {best, bd};
  }
  return out;
}

}  // namespace

double chamfer(const Points& a, const Points& b) {
  require_points(a, b, "chamfer");
  double ab = 0, ba = 0;
  for (const auto& [j, d] : nearest(a, b)) ab += std::sqrt(d);
  for (const auto& [j, d] : nearest(b, a)) ba += std::sqrt(d);
  return 0.5 * (ab / static_cast<double>(a.rows()) + ba / static_cast<double>(b.rows()));
}

LossGrad chamfer_loss(const Points& pred, const Points& target) {
  require_points(pred, target, "chamfer_loss");
  const double na = static_cast<double>(pred.rows()), nb = static_cast<double>(target.rows());
  LossGrad out;
  out.grad = MatrixX<double>::Zero(pred.rows(), 3);
  const auto fwd = nearest(pred, target);
  for (Index i = 0; i < pred.rows(); ++i) {
    out.loss += 0.5 * fwd[i].second / na;
    out.grad.row(i) += (pred.row(i) - target.row(fwd[i].first)) / na;
  }
  const auto bwd = nearest(target, pred);
  for (Index j = 0; j < target.rows(); ++j) {
    out.loss += 0.5 * bwd[j].second / nb;
    out.grad.row(bwd[j].first) += (pred.row(bwd[j].first) - target.row(j)) / nb;
  }
  return out;
}

Occupancy occupancy_metrics(const Points& pred, const Points& gt, double tau) {
  require_points(pred, gt, "occupancy_metrics");
  if (!(tau > 0.0)) throw std::invalid_argument("occupancy_metrics: tau must be positive");
  const double t2 = tau * tau;
  Occupancy o;
  for (const auto& [j, d] : nearest(pred, gt)) o.acc += d <= t2 ? 1.0 : 0.0;
  for (const auto& [j, d] : nearest(gt, pred)) o.cp += d <= t2 ? 1.0 : 0.0;
  o.acc /= static_cast<double>(pred.rows());
  o.cp /= static_cast<double>(gt.rows());
  o.f1 = o.acc + o.cp > 0.0 ? 2 * o.acc * o.cp / (o.acc + o.cp) : 0.0;
  return o;
}

double default_tau(const Points& gt) {
  if (gt.rows() < 2) throw GeometryError("default_tau: need at least two points");
  double total = 0;
  for (Index i = 0; i < gt.rows(); ++i) {
    double bd = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < gt.rows(); ++j)
      if (j != i) bd = std::min(bd, (gt.row(i) - gt.row(j)).squaredNorm());
    total += std::sqrt(bd);
  }
  return 2.0 * total / static_cast<double>(gt.rows());
}

SegmentationScores segmentation_metrics(std::span<const int> pred, std::span<const int> gt, int num_classes) {
  if (pred.size() != gt.size()) throw ShapeError("segmentation_metrics: label counts differ");
  std::vector<double> tp(static_cast<std::size_t>(num_classes)), fp(tp), fn(tp);
  double correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p < 0 || p >= num_classes || g < 0 || g >= num_classes)
      throw std::out_of_range("segmentation_metrics: label out of range");
    if (p == g) {
      tp[g] += 1;
      correct += 1;
    } else {
      fp[p] += 1;
      fn[g] += 1;
    }
  }
  SegmentationScores s;
  int iou_classes = 0, acc_classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double u = tp[c] + fp[c] + fn[c];
    if (u > 0) {
      s.miou += tp[c] / u;
      ++iou_classes;
    }
    if (tp[c] + fn[c] > 0) {
      s.macc += tp[c] / (tp[c] + fn[c]);
      ++acc_classes;
    }
  }
  s.miou = iou_classes ? s.miou / iou_classes : 0.0;
  s.macc = acc_classes ? s.macc / acc_classes : 0.0;
  s.oa = gt.empty() ? 0.0 : correct / static_cast<double>(gt.size());
  return s;
}

}  // namespace pmx
