#include "pointmixer/tasks/dataset.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Geometry>

namespace pmx {

const char* task_name(Task t) {
  switch (t) {
    case Task::Classification: return "cls";
    case Task::Segmentation: return "seg";
    case Task::Reconstruction: return "recon";
  }
  return "?";
}

std::optional<Task> parse_task(const std::string& s) {
  if (s == "cls") return Task::Classification;
  if (s == "seg") return Task::Segmentation;
  if (s == "recon") return Task::Reconstruction;
  return std::nullopt;
}

const char* rotation_name(PoseRotation r) {
  switch (r) {
    case PoseRotation::None: return "none";
    case PoseRotation::Up: return "up";
    case PoseRotation::Full: return "full";
  }
  return "?";
}

std::optional<PoseRotation> parse_rotation(const std::string& s) {
  if (s == "none") return PoseRotation::None;
  if (s == "up") return PoseRotation::Up;
  if (s == "full") return PoseRotation::Full;
  return std::nullopt;
}

void DatasetSpec::validate() const {
  if (task == Task::Segmentation && (classes < 2 || classes > 3))
    throw std::invalid_argument("segmentation composites have 2 or 3 parts");
  if (task == Task::Classification && (classes < 1 || classes > 3))
    throw std::invalid_argument("classification uses 1 to 3 shape classes");
  if (points < 2) throw std::invalid_argument("clouds need at least 2 points");
  if (task == Task::Segmentation && points < classes) throw std::invalid_argument("fewer points than parts");
  if (task == Task::Reconstruction && (input_points < 0 || input_points > points))
    throw std::invalid_argument("reconstruction input size must lie in [0, points]");
  if (train_clouds < 0 || test_clouds < 0) throw std::invalid_argument("negative split size");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("noise must be finite and >= 0");
}

namespace {

Eigen::RowVector3d unit_vector(Rng& rng) {
  Eigen::RowVector3d v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

}  // namespace

Points sample_primitive(Primitive shape, Index n, Rng& rng) {
  Points p(n, 3);
  for (Index i = 0; i < n; ++i) {
    switch (shape) {
      case Primitive::Sphere: p.row(i) = unit_vector(rng); break;
      case Primitive::Cube: {
        const double h = 0.7;
        const auto face = static_cast<int>(rng.below(6));
        const int axis = face / 2;
        Eigen::RowVector3d q(rng.uniform(-h, h), rng.uniform(-h, h), rng.uniform(-h, h));
        q(axis) = face % 2 == 0 ? -h : h;
        p.row(i) = q;
        break;
      }
      case Primitive::Torus: {
        const double big = 0.7, small = 0.3;
        double u, v;
        // surface element is proportional to big + small cos v
        do {
          u = rng.uniform(0.0, 2 * std::numbers::pi);
          v = rng.uniform(0.0, 2 * std::numbers::pi);
        } while (rng.uniform() * (big + small) > big + small * std::cos(v));
        p.row(i) << (big + small * std::cos(v)) * std::cos(u), (big + small * std::cos(v)) * std::sin(u),
            small * std::sin(v);
        break;
      }
    }
  }
  return p;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion
  const double u1 = rng.uniform(), u2 = rng.uniform(0, 2 * std::numbers::pi), u3 = rng.uniform(0, 2 * std::numbers::pi);
  const Eigen::Quaterniond q(std::sqrt(u1) * std::cos(u3), std::sqrt(1 - u1) * std::sin(u2),
                             std::sqrt(1 - u1) * std::cos(u2), std::sqrt(u1) * std::sin(u3));
  return q.normalized().toRotationMatrix();
}

Eigen::Matrix3d random_up_rotation(Rng& rng) {
  return Eigen::AngleAxisd(rng.uniform(0, 2 * std::numbers::pi), Eigen::Vector3d::UnitZ())
      .toRotationMatrix();
}

Eigen::RowVector3d truncated_jitter(Rng& rng, double sigma) {
  if (sigma == 0.0) return Eigen::RowVector3d::Zero();
  Eigen::RowVector3d j;
  do {
    j = {rng.normal() * sigma, rng.normal() * sigma, rng.normal() * sigma};
  } while (j.norm() >= 3 * sigma);
  return j;
}

namespace {

constexpr Primitive kShapes[] = {Primitive::Sphere, Primitive::Cube, Primitive::Torus};

struct Pose {
  Eigen::Matrix3d rotation;
  Eigen::RowVector3d center;
};

Pose random_pose(PoseRotation mode, Rng& rng) {
  Pose p;
  switch (mode) {
    case PoseRotation::None: p.rotation.setIdentity(); break;
    case PoseRotation::Up: p.rotation = random_up_rotation(rng); break;
    case PoseRotation::Full: p.rotation = random_rotation(rng); break;
  }
  p.center = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
  return p;
}

void place(Points& p, const Pose& pose) {
  p = (p * pose.rotation.transpose()).rowwise() + pose.center;
}

Sample classification_cloud(const DatasetSpec& spec, Index i, Rng& rng) {
  Sample s;
  s.label = static_cast<int>(i % spec.classes);
  Points p = sample_primitive(kShapes[s.label], spec.points, rng);
  place(p, random_pose(spec.rotation, rng));
  for (Index r = 0; r < p.rows(); ++r) p.row(r) += truncated_jitter(rng, spec.noise);
  s.cloud = PointCloud(std::move(p), MatrixX<double>(spec.points, 0),
                       std::vector<int>(static_cast<std::size_t>(spec.points), s.label));
  return s;
}

// Primitives stacked along the up axis, each scaled to fit its slot.
Sample segmentation_cloud(const DatasetSpec& spec, Rng& rng) {
  const int parts = spec.classes;
  Points p(spec.points, 3);
  std::vector<int> labels;
  Index row = 0;
  for (int part = 0; part < parts; ++part) {
    const Index count = spec.points / parts + (part < spec.points % parts ? 1 : 0);
    Points q = sample_primitive(kShapes[part], count, rng) * 0.45;
    q.col(2).array() += (part - (parts - 1) / 2.0) * 1.2;
    p.middleRows(row, count) = q;
    labels.insert(labels.end(), static_cast<std::size_t>(count), part);
    row += count;
  }
  place(p, random_pose(spec.rotation, rng));
  for (Index r = 0; r < p.rows(); ++r) p.row(r) += truncated_jitter(rng, spec.noise);
  Sample s;
  s.cloud = PointCloud(std::move(p), MatrixX<double>(spec.points, 0), std::move(labels));
  return s;
}

Sample reconstruction_cloud(const DatasetSpec& spec, Index i, Rng& rng) {
  const Index m = spec.input_points > 0 ? spec.input_points : std::max<Index>(1, spec.points / 2);
  Sample s;
  s.target = sample_primitive(kShapes[i % 3], spec.points, rng);
  place(s.target, random_pose(spec.rotation, rng));
  std::vector<Index> order(static_cast<std::size_t>(spec.points));
  for (Index r = 0; r < spec.points; ++r) order[r] = r;
  rng.shuffle(order);
  Points input(m, 3);
  for (Index r = 0; r < m; ++r)
    input.row(r) = s.target.row(order[r]) +
                   Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal()) * spec.noise;
  s.cloud = PointCloud(std::move(input));
  return s;
}

std::vector<Sample> make_split(const DatasetSpec& spec, Index count, std::uint64_t stream) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  const std::uint64_t split_seed = mix_seed(spec.seed, stream);
  for (Index i = 0; i < count; ++i) {
    Rng rng(mix_seed(split_seed, static_cast<std::uint64_t>(i)));
    switch (spec.task) {
      case Task::Classification: out.push_back(classification_cloud(spec, i, rng)); break;
      case Task::Segmentation: out.push_back(segmentation_cloud(spec, rng)); break;
      case Task::Reconstruction: out.push_back(reconstruction_cloud(spec, i, rng)); break;
    }
  }
  return out;
}

}  // namespace

Dataset gen_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  d.train = make_split(spec, spec.train_clouds, 1);
  d.test = make_split(spec, spec.test_clouds, 2);
  return d;
}

}  // namespace pmx
