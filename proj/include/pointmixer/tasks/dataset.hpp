#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointmixer/geom.hpp"
#include "pointmixer/nn/rng.hpp"

namespace pmx {

enum class Task { Classification, Segmentation, Reconstruction };

const char* task_name(Task t);                    // "cls", "seg", "recon"
std::optional<Task> parse_task(const std::string& s);

/// Rotation part of the random rigid pose.
enum class PoseRotation { None, Up, Full };

const char* rotation_name(PoseRotation r);        // "none", "up", "full"
std::optional<PoseRotation> parse_rotation(const std::string& s);

struct DatasetSpec {
  Task task = Task::Classification;
  int classes = 3;            // shape classes, or parts per composite for segmentation
  Index points = 256;         // points per (target) cloud
  Index input_points = 0;     // reconstruction input size; 0 means points / 2
  Index train_clouds = 600;
  Index test_clouds = 150;
  double noise = 0.01;        // jitter sigma
  PoseRotation rotation = PoseRotation::Up;  // Up spins about z only
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const DatasetSpec&) const = default;
};

struct Sample {
  PointCloud cloud;  // network input; segmentation carries per-point part labels
  int label = -1;    // classification target
  Points target;     // reconstruction target (clean surface samples)
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

enum class Primitive { Sphere, Cube, Torus };

/// Area-uniform surface samples in the canonical frame: unit sphere, cube of
/// half side 0.7, torus with radii 0.7 and 0.3 around the z axis.
Points sample_primitive(Primitive shape, Index n, Rng& rng);

/// Haar-uniform random rotation.
Eigen::Matrix3d random_rotation(Rng& rng);

/// Rotation about the z axis by a uniform angle.
Eigen::Matrix3d random_up_rotation(Rng& rng);

/// Gaussian offset with norm below 3 sigma (resampled otherwise).
Eigen::RowVector3d truncated_jitter(Rng& rng, double sigma);

/// Train and test splits come from separate seed streams; each cloud has its
/// own stream so the split contents do not depend on each other's sizes.
Dataset gen_dataset(const DatasetSpec& spec);

}  // namespace pmx
