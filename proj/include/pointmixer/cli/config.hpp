#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointmixer/net.hpp"
#include "pointmixer/tasks/train.hpp"

namespace pmx {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a train or eval run needs. Keys are "section.name"; see
/// config_keys() for the documented list.
struct RunConfig {
  DatasetSpec data{.seed = 1};
  std::string data_dir;  // empty: generate from `data`

  std::vector<Index> widths{16, 32, 64};
  std::vector<Index> blocks{1, 1, 1};
  std::vector<double> ratios{1.0, 0.25, 0.25};
  Index k = 8;
  Variant variant = Variant::Softmax;
  bool intra = true;
  bool inter = true;
  bool hier = true;
  Index reduction = 4;
  Index expansion = 2;
  bool positional_encoding = true;
  bool g1_nonlinear = false;
  bool token_positional_encoding = false;
  double dropout = 0.5;
  Index fps_start = 0;
  std::uint64_t net_seed = 1;

  Index epochs = 30;
  Index batch = 8;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  Schedule schedule = Schedule::Cosine;
  std::vector<int> milestones;
  double lr_factor = 0.1;
  std::uint64_t train_seed = 1;

  std::string out_dir = "run";

  bool operator==(const RunConfig&) const = default;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in render order.
const std::vector<ConfigKey>& config_keys();

/// "key = value" lines; '#' starts a comment. Unknown or repeated keys and
/// unparsable values throw ConfigError. Missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
std::string render_config(const RunConfig& config, bool with_help = false);

RunConfig load_config(const std::string& path);  // IoError when unreadable

/// Applies one "key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

/// PMIX_SEED, when set, replaces data.seed.
void apply_environment(RunConfig& config);

/// Derived settings. network_config picks the head from the task.
NetworkConfig network_config(const RunConfig& config);
TrainOptions train_options(const RunConfig& config);

}  // namespace pmx
