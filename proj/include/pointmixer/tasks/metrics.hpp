#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pointmixer/types.hpp"

namespace pmx {

/// Ordered name -> value map printed as key=value lines or CSV.
struct MetricReport {
  std::vector<std::pair<std::string, double>> values;

  void set(const std::string& name, double v);
  double at(const std::string& name) const;  // throws std::out_of_range
  bool has(const std::string& name) const;

  std::string to_kv() const;
  std::string csv_header() const;
  std::string csv_row() const;
};

/// Shortest text that reads back to exactly v.
std::string format_double(double v);

struct LossGrad {
  double loss = 0.0;
  MatrixX<double> grad;
};

/// Mean over rows of -log softmax(logits)[label]; grad = (softmax - onehot) / rows.
LossGrad cross_entropy(const MatrixX<double>& logits, std::span<const int> labels);

/// 1/2 (mean_a min_b |a-b| + mean_b min_a |b-a|), Euclidean distances.
double chamfer(const Points& a, const Points& b);

/// Training form with squared distances; grad is with respect to `pred`.
LossGrad chamfer_loss(const Points& pred, const Points& target);

struct Occupancy {
  double acc = 0.0;
  double cp = 0.0;
  double f1 = 0.0;
};

Occupancy occupancy_metrics(const Points& pred, const Points& gt, double tau);

/// 2 x the mean nearest-neighbor spacing of gt.
double default_tau(const Points& gt);

struct SegmentationScores {
  double miou = 0.0;
  double macc = 0.0;
  double oa = 0.0;
};

/// Classes absent from both prediction and ground truth are left out of the
/// IoU mean; mAcc averages recall over classes present in the ground truth.
SegmentationScores segmentation_metrics(std::span<const int> pred, std::span<const int> gt, int num_classes);

}  // namespace pmx
