#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "pointmixer/geom.hpp"
#include "pointmixer/tasks/dataset.hpp"

namespace pmx {

/// Missing, unreadable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ASCII cloud: header "pmcloud <N> <C> <has_labels>", then N lines of
/// "x y z f1..fC [label]" written with 17 significant digits.
void write_cloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_cloud(std::istream& in);

void save_cloud(const std::string& path, const PointCloud& cloud);
PointCloud load_cloud(const std::string& path);

/// Writes <dir>/train/NNNNNN.pmcloud, <dir>/test/..., reconstruction targets
/// as NNNNNN.target.pmcloud, and <dir>/manifest.txt listing every file.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset read_dataset(const std::string& dir);

}  // namespace pmx
