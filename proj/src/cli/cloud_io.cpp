#include "pointmixer/cli/cloud_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pointmixer/tasks/metrics.hpp"

namespace pmx {

namespace fs = std::filesystem;

namespace {

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

std::string cloud_name(Index i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06ld%s", static_cast<long>(i), suffix);
  return buf;
}

}  // namespace

void write_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "pmcloud " << cloud.size() << ' ' << cloud.channels() << ' ' << (cloud.has_labels() ? 1 : 0) << '\n';
  for (Index i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      if (c > 0) out << ' ';
      put(out, cloud.positions(i, c));
    }
    for (Index c = 0; c < cloud.channels(); ++c) {
      out << ' ';
      put(out, cloud.features(i, c));
    }
    if (cloud.has_labels()) out << ' ' << cloud.labels[static_cast<std::size_t>(i)];
    out << '\n';
  }
}

PointCloud read_cloud(std::istream& in) {
  std::string magic;
  long n = -1, c = -1;
  int labeled = -1;
  if (!(in >> magic >> n >> c >> labeled) || magic != "pmcloud" || n < 0 || c < 0 || (labeled != 0 && labeled != 1))
    throw IoError("bad pmcloud header");
  Points p(n, 3);
  MatrixX<double> f(n, c);
  std::vector<int> labels;
  std::string line;
  std::getline(in, line);
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError("pmcloud ends after " + std::to_string(i) + " of " + std::to_string(n) + " points");
    std::istringstream row(line);
    for (int j = 0; j < 3; ++j)
      if (!(row >> p(i, j))) throw IoError("pmcloud line " + std::to_string(i + 2) + ": bad coordinate");
    for (long j = 0; j < c; ++j)
      if (!(row >> f(i, j))) throw IoError("pmcloud line " + std::to_string(i + 2) + ": bad feature");
    if (labeled) {
      int l;
      if (!(row >> l)) throw IoError("pmcloud line " + std::to_string(i + 2) + ": bad label");
      labels.push_back(l);
    }
    std::string extra;
    if (row >> extra) throw IoError("pmcloud line " + std::to_string(i + 2) + ": trailing values");
  }
  std::string extra;
  if (in >> extra) throw IoError("pmcloud has more rows than its header declares");
  return PointCloud(std::move(p), std::move(f), std::move(labels));
}

void save_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_cloud(out, cloud);
  if (!out) throw IoError("write failed: " + path);
}

PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return read_cloud(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_dataset(const std::string& dir, const Dataset& data) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "train", ec);
  fs::create_directories(root / "test", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  std::ofstream manifest(root / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());
  const DatasetSpec& s = data.spec;
  manifest << "# pointmixer dataset\n"
           << "task " << task_name(s.task) << '\n'
           << "classes " << s.classes << '\n'
           << "points " << s.points << '\n'
           << "input_points " << s.input_points << '\n'
           << "noise " << format_double(s.noise) << '\n'
           << "rotation " << rotation_name(s.rotation) << '\n'
           << "seed " << s.seed << '\n';
  for (const char* split : {"train", "test"}) {
    const auto& samples = std::string(split) == "train" ? data.train : data.test;
    manifest << "split " << split << ' ' << samples.size() << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::string rel = std::string(split) + "/" + cloud_name(static_cast<Index>(i), ".pmcloud");
      save_cloud((root / rel).string(), samples[i].cloud);
      manifest << "cloud " << rel << ' ' << samples[i].label;
      if (s.task == Task::Reconstruction) {
        const std::string target = std::string(split) + "/" + cloud_name(static_cast<Index>(i), ".target.pmcloud");
        save_cloud((root / target).string(), PointCloud(samples[i].target));
        manifest << ' ' << target;
      }
      manifest << '\n';
    }
  }
  if (!manifest) throw IoError("write failed: " + (root / "manifest.txt").string());
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path mpath = root / "manifest.txt";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot read " + mpath.string());
  Dataset data;
  std::vector<Sample>* split = nullptr;
  std::size_t declared_train = 0, declared_test = 0;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) { throw IoError(mpath.string() + ":" + std::to_string(lineno) + ": " + what); };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string key;
    row >> key;
    if (key == "task") {
      std::string t;
      row >> t;
      const auto task = parse_task(t);
      if (!task) fail("unknown task " + t);
      data.spec.task = *task;
    } else if (key == "classes") {
      if (!(row >> data.spec.classes)) fail("bad classes");
    } else if (key == "points") {
      if (!(row >> data.spec.points)) fail("bad points");
    } else if (key == "input_points") {
      if (!(row >> data.spec.input_points)) fail("bad input_points");
    } else if (key == "noise") {
      if (!(row >> data.spec.noise)) fail("bad noise");
    } else if (key == "rotation") {
      std::string r;
      row >> r;
      const auto rot = parse_rotation(r);
      if (!rot) fail("unknown rotation " + r);
      data.spec.rotation = *rot;
    } else if (key == "seed") {
      if (!(row >> data.spec.seed)) fail("bad seed");
    } else if (key == "split") {
      std::string name;
      std::size_t count = 0;
      if (!(row >> name >> count)) fail("bad split line");
      if (name == "train") {
        split = &data.train;
        declared_train = count;
      } else if (name == "test") {
        split = &data.test;
        declared_test = count;
      } else {
        fail("unknown split " + name);
      }
      split->reserve(count);
    } else if (key == "cloud") {
      if (split == nullptr) fail("cloud before any split line");
      std::string rel, target;
      Sample s;
      if (!(row >> rel >> s.label)) fail("bad cloud line");
      s.cloud = load_cloud((root / rel).string());
      if (row >> target) s.target = load_cloud((root / target).string()).positions;
      split->push_back(std::move(s));
    } else {
      fail("unknown manifest key " + key);
    }
  }
  if (data.train.size() != declared_train || data.test.size() != declared_test)
    throw IoError(mpath.string() + ": split sizes do not match their cloud lines");
  data.spec.train_clouds = static_cast<Index>(data.train.size());
  data.spec.test_clouds = static_cast<Index>(data.test.size());
  return data;
}

}  // namespace pmx
