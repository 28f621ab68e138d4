#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pointmixer/cli/config.hpp"

namespace pmx {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // gradcheck or rfield found a violation
  kExitUsage = 2,        // bad flags, bad config, head/task mismatch
  kExitIo = 3,
  kExitNonFinite = 4,
};

/// args excludes the program name: {"gen", "--task", "cls", ...}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct AblationRow {
  bool intra = true;
  bool inter = true;
  bool hier = true;
  Index params = 0;
  double final_loss = 0.0;
  MetricReport metrics;
};

/// Trains and evaluates the eight {intra} x {inter} x {hier} switch settings
/// of `config`, full model first.
std::vector<AblationRow> run_ablation(const RunConfig& config, const Dataset& data,
                                      const std::function<void(const AblationRow&)>& progress = {});

/// Fixed-width table with a check mark column per switch.
std::string format_ablation(const std::vector<AblationRow>& rows);

/// Effective dataset for a run: the data.dir manifest when set, else generated.
/// Throws IoError, ConfigError (task mismatch) or std::invalid_argument.
Dataset load_run_data(const RunConfig& config);

}  // namespace pmx
