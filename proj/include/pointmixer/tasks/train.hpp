#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pointmixer/net.hpp"
#include "pointmixer/nn/optim.hpp"
#include "pointmixer/tasks/dataset.hpp"
#include "pointmixer/tasks/metrics.hpp"

namespace pmx {

enum class Schedule { Cosine, Step, Constant };

struct EpochLog {
  Index epoch = 0;
  double lr = 0.0;
  double loss = 0.0;      // mean training loss over the epoch
  MetricReport metrics;   // on the test split
};

struct TrainOptions {
  Index epochs = 30;
  Index batch = 2;
  SgdOptions sgd;  // lr is the base rate of the schedule
  double clip_norm = 0.0;  // global gradient norm cap, 0 = off
  Schedule schedule = Schedule::Cosine;
  std::vector<int> milestones;
  double lr_factor = 0.1;
  std::uint64_t seed = 0;
  Index start_epoch = 0;  // resume point; epochs before it are skipped
  Index end_epoch = -1;   // stop before this epoch; -1 runs to `epochs`
  bool evaluate_each_epoch = true;
  std::function<void(const EpochLog&)> on_epoch;
};

double scheduled_lr(const TrainOptions& opt, Index epoch);

/// Throws ShapeError when the head, input width or cloud sizes do not fit
/// the dataset.
void check_compatible(const NetworkConfig& config, const DatasetSpec& spec);

std::vector<CloudGeometry> prepare_all(std::span<const Sample> samples, const NetworkConfig& config);

/// Forward and backward for one sample; parameter gradients scaled by
/// `weight` are added to net.params grads. Returns the unscaled loss.
double accumulate_sample(Network<double>& net, const Sample& sample, const CloudGeometry& geometry, Task task,
                         double weight, Rng& dropout);

/// One SGD step on a mini-batch (gradients clipped first when clip_norm > 0);
/// returns the mean loss.
double train_step(Network<double>& net, std::span<const Sample* const> batch,
                  std::span<const CloudGeometry* const> geometry, Task task, const SgdOptions& sgd, Rng& dropout,
                  double clip_norm = 0.0);

/// Deterministic loop: epoch e shuffles and drops out with a generator
/// seeded by (seed, e). Throws NonFiniteError on a non-finite loss.
std::vector<EpochLog> train(Network<double>& net, const Dataset& data, const TrainOptions& opt);

struct Predictions {
  std::vector<int> labels;             // classification: one per cloud
  std::vector<std::vector<int>> parts; // segmentation: per point
  std::vector<Points> shapes;          // reconstruction: predicted points
};

Predictions predict(const Network<double>& net, std::span<const Sample> samples, Task task,
                    const std::vector<CloudGeometry>* geometry = nullptr);

/// cls: oa, macc. seg: miou, macc, oa. recon: cd, acc, cp, f1 (cloud means).
MetricReport evaluate(const Network<double>& net, std::span<const Sample> samples, Task task, int classes,
                      const std::vector<CloudGeometry>* geometry = nullptr);

}  // namespace pmx
