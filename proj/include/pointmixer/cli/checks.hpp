#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointmixer/mixer.hpp"

namespace pmx {

struct SuiteResult {
  std::string name;   // op name for primitive checks, layer or network name otherwise
  bool primitive = false;
  double max_error = 0.0;
  std::string worst;
  Index coordinates = 0;
};

/// Central-difference checks of every primitive op, every layer variant, the
/// transitions, a mixer block and two 2-level networks. Each check contracts
/// the output with a random seed matrix, so a primitive check exercises only
/// that op's backward.
std::vector<SuiteResult> gradcheck_suite(double h, std::uint64_t seed, bool networks = true);

struct BenchRow {
  Variant variant;
  Index params = 0;
  double median_ms = 0.0;        // forward + backward
  std::size_t peak_bytes = 0;    // tape high-water mark of tensor bytes
};

struct BenchOptions {
  Index points = 1024;
  Index k = 16;
  Index channels = 32;
  Index iterations = 20;
  bool single_precision = false;
  std::uint64_t seed = 0;
};

/// One intra-set layer of each variant on the same random cloud.
std::vector<BenchRow> bench_variants(const BenchOptions& opt);

}  // namespace pmx
