#include "pointmixer/tasks/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace pmx {

double scheduled_lr(const TrainOptions& opt, Index epoch) {
  switch (opt.schedule) {
    case Schedule::Cosine: return cosine_lr(static_cast<int>(epoch), static_cast<int>(opt.epochs), opt.sgd.lr);
    case Schedule::Step: return step_lr(static_cast<int>(epoch), opt.milestones, opt.sgd.lr, opt.lr_factor);
    case Schedule::Constant: return opt.sgd.lr;
  }
  return opt.sgd.lr;
}

void check_compatible(const NetworkConfig& config, const DatasetSpec& spec) {
  config.validate();
  if (config.feature_channels != 0) throw ShapeError("synthetic clouds carry no input features");
  switch (spec.task) {
    case Task::Classification: {
      const auto* h = std::get_if<ClassificationHead>(&config.head);
      if (h == nullptr) throw ShapeError("classification data needs a classification head");
      if (h->num_classes < spec.classes) throw ShapeError("classification head has fewer classes than the data");
      break;
    }
    case Task::Segmentation: {
      const auto* h = std::get_if<DenseHead>(&config.head);
      if (h == nullptr || h->out_channels != spec.classes)
        throw ShapeError("segmentation data needs a dense head with one output per part");
      break;
    }
    case Task::Reconstruction: {
      const auto* h = std::get_if<DenseHead>(&config.head);
      if (h == nullptr || h->out_channels != 3) throw ShapeError("reconstruction needs a dense head with 3 outputs");
      break;
    }
  }
  const Index input = spec.task == Task::Reconstruction
                          ? (spec.input_points > 0 ? spec.input_points : std::max<Index>(1, spec.points / 2))
                          : spec.points;
  if (input < 2 * config.k)
    throw ShapeError("clouds of " + std::to_string(input) + " points are smaller than 2k = " +
                     std::to_string(2 * config.k));
}

std::vector<CloudGeometry> prepare_all(std::span<const Sample> samples, const NetworkConfig& config) {
  std::vector<CloudGeometry> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_geometry(s.cloud.positions, config));
  return out;
}

namespace {

MatrixX<double> offsets_to_points(const Sample& s, const MatrixX<double>& offsets) {
  return s.cloud.positions + offsets;
}

LossGrad sample_loss(const Sample& s, const MatrixX<double>& out, Task task) {
  switch (task) {
    case Task::Classification: {
      const int label = s.label;
      return cross_entropy(out, std::span<const int>(&label, 1));
    }
    case Task::Segmentation: return cross_entropy(out, s.cloud.labels);
    case Task::Reconstruction: return chamfer_loss(offsets_to_points(s, out), s.target);
  }
  throw ShapeError("unknown task");
}

}  // namespace

double accumulate_sample(Network<double>& net, const Sample& sample, const CloudGeometry& geometry, Task task,
                         double weight, Rng& dropout) {
  Tape<double> tape(net.params);
  ForwardOptions fo;
  fo.mode = Mode::Train;
  fo.dropout_rng = &dropout;
  const Var<double> out = task == Task::Classification ? classify(net, tape, sample.cloud, geometry, fo)
                                                       : predict_dense(net, tape, sample.cloud, geometry, fo);
  const LossGrad lg = sample_loss(sample, out.value(), task);
  if (!std::isfinite(lg.loss)) return lg.loss;
  tape.backward(out, lg.grad * weight);
  tape.accumulate_into(net.params);
  return lg.loss;
}

double train_step(Network<double>& net, std::span<const Sample* const> batch,
                  std::span<const CloudGeometry* const> geometry, Task task, const SgdOptions& sgd, Rng& dropout,
                  double clip_norm) {
  if (batch.empty() || batch.size() != geometry.size()) throw std::invalid_argument("train_step: bad batch");
  net.params.zero_grad();
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double loss = accumulate_sample(net, *batch[i], *geometry[i], task, weight, dropout);
    if (!std::isfinite(loss)) throw NonFiniteError("non-finite loss on batch item " + std::to_string(i));
    total += loss;
  }
  if (!std::isfinite(clip_grad_norm(net.params, clip_norm))) throw NonFiniteError("non-finite gradient");
  sgd_step(net.params, sgd);
  return total * weight;
}

std::vector<EpochLog> train(Network<double>& net, const Dataset& data, const TrainOptions& opt) {
  check_compatible(net.config, data.spec);
  if (opt.batch < 1) throw std::invalid_argument("batch size must be positive");
  if (opt.epochs < 0 || opt.start_epoch < 0) throw std::invalid_argument("epoch counts must be non-negative");
  std::vector<EpochLog> log;
  const Index end = opt.end_epoch < 0 ? opt.epochs : std::min(opt.end_epoch, opt.epochs);
  if (opt.start_epoch >= end || data.train.empty()) return log;

  const Task task = data.spec.task;
  const auto train_geo = prepare_all(data.train, net.config);
  const auto test_geo = prepare_all(data.test, net.config);

  for (Index epoch = opt.start_epoch; epoch < end; ++epoch) {
    Rng rng(mix_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<Index> order(data.train.size());
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order);

    SgdOptions sgd = opt.sgd;
    sgd.lr = scheduled_lr(opt, epoch);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      std::vector<const Sample*> batch;
      std::vector<const CloudGeometry*> geo;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&data.train[order[i]]);
        geo.push_back(&train_geo[order[i]]);
      }
      double loss;
      try {
        loss = train_step(net, batch, geo, task, sgd, rng, opt.clip_norm);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(start / static_cast<std::size_t>(opt.batch)) + ": " + e.what());
      }
      total += loss * static_cast<double>(end - start);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = sgd.lr;
    entry.loss = total / static_cast<double>(order.size());
    if (opt.evaluate_each_epoch && !data.test.empty())
      entry.metrics = evaluate(net, data.test, task, data.spec.classes, &test_geo);
    if (opt.on_epoch) opt.on_epoch(entry);
    log.push_back(std::move(entry));
  }
  return log;
}

Predictions predict(const Network<double>& net, std::span<const Sample> samples, Task task,
                    const std::vector<CloudGeometry>* geometry) {
  Predictions p;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const CloudGeometry local = geometry ? CloudGeometry{} : prepare_geometry(s.cloud.positions, net.config);
    const CloudGeometry& g = geometry ? (*geometry)[i] : local;
    Tape<double> tape(net.params);
    if (task == Task::Classification) {
      const auto logits = classify(net, tape, s.cloud, g).value();
      Index best;
      logits.row(0).maxCoeff(&best);
      p.labels.push_back(static_cast<int>(best));
    } else if (task == Task::Segmentation) {
      const auto logits = predict_dense(net, tape, s.cloud, g).value();
      std::vector<int> parts(static_cast<std::size_t>(logits.rows()));
      for (Index r = 0; r < logits.rows(); ++r) {
        Index best;
        logits.row(r).maxCoeff(&best);
        parts[r] = static_cast<int>(best);
      }
      p.parts.push_back(std::move(parts));
    } else {
      p.shapes.push_back(offsets_to_points(s, predict_dense(net, tape, s.cloud, g).value()));
    }
  }
  return p;
}

MetricReport evaluate(const Network<double>& net, std::span<const Sample> samples, Task task, int classes,
                      const std::vector<CloudGeometry>* geometry) {
  MetricReport r;
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  const Predictions p = predict(net, samples, task, geometry);
  if (task == Task::Classification) {
    std::vector<int> gt;
    for (const auto& s : samples) gt.push_back(s.label);
    const int n = std::max(classes, static_cast<int>(std::get<ClassificationHead>(net.config.head).num_classes));
    const auto m = segmentation_metrics(p.labels, gt, n);
    r.set("oa", m.oa);
    r.set("macc", m.macc);
  } else if (task == Task::Segmentation) {
    std::vector<int> pred, gt;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      pred.insert(pred.end(), p.parts[i].begin(), p.parts[i].end());
      gt.insert(gt.end(), samples[i].cloud.labels.begin(), samples[i].cloud.labels.end());
    }
    const auto m = segmentation_metrics(pred, gt, classes);
    r.set("miou", m.miou);
    r.set("macc", m.macc);
    r.set("oa", m.oa);
  } else {
    double cd = 0, acc = 0, cp = 0, f1 = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Points& gt = samples[i].target;
      cd += chamfer(p.shapes[i], gt);
      const auto o = occupancy_metrics(p.shapes[i], gt, default_tau(gt));
      acc += o.acc;
      cp += o.cp;
      f1 += o.f1;
    }
    const double n = static_cast<double>(samples.size());
    r.set("cd", cd / n);
    r.set("acc", acc / n);
    r.set("cp", cp / n);
    r.set("f1", f1 / n);
  }
  return r;
}

}  // namespace pmx
