#include "pointmixer/cli/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>

#include "pointmixer/cli/cloud_io.hpp"

namespace pmx {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": cannot parse '" + v + "'");
  if constexpr (std::is_integral_v<T> && std::is_signed_v<T>)
    if (out < 0) throw ConfigError(key + ": must not be negative");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": expected 0/1 or true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  return out;
}

template <typename T>
std::string render_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

const char* schedule_name(Schedule s) {
  switch (s) {
    case Schedule::Cosine: return "cosine";
    case Schedule::Step: return "step";
    case Schedule::Constant: return "constant";
  }
  return "?";
}

struct KeyDef {
  ConfigKey doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define PMX_INT(key, field, help)                                                           \
  KeyDef{{key, help}, [](const RunConfig& c) { return std::to_string(c.field); },          \
         [](RunConfig& c, const std::string& v) { c.field = parse_number<decltype(c.field)>(key, v); }}
#define PMX_REAL(key, field, help)                                                          \
  KeyDef{{key, help}, [](const RunConfig& c) { return format_double(c.field); },           \
         [](RunConfig& c, const std::string& v) { c.field = parse_number<double>(key, v); }}
#define PMX_BOOL(key, field, help)                                                          \
  KeyDef{{key, help}, [](const RunConfig& c) { return std::string(c.field ? "1" : "0"); }, \
         [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); }}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      KeyDef{{"data.task", "cls, seg or recon"},
             [](const RunConfig& c) { return std::string(task_name(c.data.task)); },
             [](RunConfig& c, const std::string& v) {
               const auto t = parse_task(v);
               if (!t) throw ConfigError("data.task: unknown task '" + v + "'");
               c.data.task = *t;
             }},
      PMX_INT("data.classes", data.classes, "shape classes (cls) or parts (seg)"),
      PMX_INT("data.points", data.points, "points per cloud"),
      PMX_INT("data.input_points", data.input_points, "recon input size, 0 = points/2"),
      PMX_INT("data.train_clouds", data.train_clouds, "training clouds"),
      PMX_INT("data.test_clouds", data.test_clouds, "test clouds"),
      PMX_REAL("data.noise", data.noise, "jitter sigma"),
      KeyDef{{"data.rotation", "pose rotation: none, up (about z) or full"},
             [](const RunConfig& c) { return std::string(rotation_name(c.data.rotation)); },
             [](RunConfig& c, const std::string& v) {
               const auto r = parse_rotation(v);
               if (!r) throw ConfigError("data.rotation: unknown rotation '" + v + "'");
               c.data.rotation = *r;
             }},
      PMX_INT("data.seed", data.seed, "dataset seed; PMIX_SEED overrides"),
      KeyDef{{"data.dir", "dataset directory from `gen`; empty generates in memory"},
             [](const RunConfig& c) { return c.data_dir; },
             [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
      KeyDef{{"net.widths", "channels per level"}, [](const RunConfig& c) { return render_list(c.widths); },
             [](RunConfig& c, const std::string& v) { c.widths = parse_list<Index>("net.widths", v); }},
      KeyDef{{"net.blocks", "mixer blocks per level"}, [](const RunConfig& c) { return render_list(c.blocks); },
             [](RunConfig& c, const std::string& v) { c.blocks = parse_list<Index>("net.blocks", v); }},
      KeyDef{{"net.ratios", "sampling ratio per level (level 0 keeps all points)"},
             [](const RunConfig& c) { return render_list(c.ratios); },
             [](RunConfig& c, const std::string& v) { c.ratios = parse_list<double>("net.ratios", v); }},
      PMX_INT("net.k", k, "neighbors per kNN map"),
      KeyDef{{"net.variant", "intra-set operator: softmax, maxpool, attention or tokenmlp"},
             [](const RunConfig& c) { return std::string(variant_name(c.variant)); },
             [](RunConfig& c, const std::string& v) {
               const auto var = parse_variant(v);
               if (!var) throw ConfigError("net.variant: unknown variant '" + v + "'");
               c.variant = *var;
             }},
      PMX_BOOL("net.intra", intra, "intra-set mixing blocks"),
      PMX_BOOL("net.inter", inter, "inter-set mixing blocks"),
      PMX_BOOL("net.hier", hier, "hierarchical mixing transitions (0: max-pool down, 3-NN up)"),
      PMX_INT("net.reduction", reduction, "score MLP reduction factor"),
      PMX_INT("net.expansion", expansion, "channel MLP expansion"),
      PMX_BOOL("net.positional_encoding", positional_encoding, "relative position encoding"),
      PMX_BOOL("net.g1_nonlinear", g1_nonlinear, "GELU inside g1"),
      PMX_BOOL("net.token_positional_encoding", token_positional_encoding, "position input for the token variant"),
      PMX_REAL("net.dropout", dropout, "classification head dropout"),
      PMX_INT("net.fps_start", fps_start, "first FPS point at level 1"),
      PMX_INT("net.seed", net_seed, "weight initialization seed"),
      PMX_INT("train.epochs", epochs, "epochs"),
      PMX_INT("train.batch", batch, "clouds per SGD step"),
      PMX_REAL("train.lr", lr, "base learning rate"),
      PMX_REAL("train.momentum", momentum, "SGD momentum"),
      PMX_REAL("train.weight_decay", weight_decay, "L2 decay folded into the gradient"),
      PMX_REAL("train.clip_norm", clip_norm, "global gradient norm cap, 0 disables"),
      KeyDef{{"train.schedule", "cosine, step or constant"},
             [](const RunConfig& c) { return std::string(schedule_name(c.schedule)); },
             [](RunConfig& c, const std::string& v) {
               if (v == "cosine") c.schedule = Schedule::Cosine;
               else if (v == "step") c.schedule = Schedule::Step;
               else if (v == "constant") c.schedule = Schedule::Constant;
               else throw ConfigError("train.schedule: unknown schedule '" + v + "'");
             }},
      KeyDef{{"train.milestones", "epochs where the step schedule multiplies by lr_factor"},
             [](const RunConfig& c) { return render_list(c.milestones); },
             [](RunConfig& c, const std::string& v) { c.milestones = parse_list<int>("train.milestones", v); }},
      PMX_REAL("train.lr_factor", lr_factor, "step schedule factor"),
      PMX_INT("train.seed", train_seed, "shuffle and dropout seed"),
      KeyDef{{"out.dir", "run directory"}, [](const RunConfig& c) { return c.out_dir; },
             [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return defs;
}

#undef PMX_INT
#undef PMX_REAL
#undef PMX_BOOL

const KeyDef& find_key(const std::string& key) {
  for (const auto& d : key_defs())
    if (d.doc.name == key) return d;
  throw ConfigError("unknown config key '" + key + "'");
}

void assign(RunConfig& c, const std::string& line, std::set<std::string>* seen) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + line + "'");
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  const KeyDef& d = find_key(key);
  if (seen != nullptr && !seen->insert(key).second) throw ConfigError("repeated config key '" + key + "'");
  d.set(c, value);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back(d.doc);
    return out;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      assign(c, line, &seen);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

std::string render_config(const RunConfig& config, bool with_help) {
  std::string out;
  for (const auto& d : key_defs()) {
    if (with_help) out += "# " + d.doc.help + "\n";
    out += d.doc.name + " = " + d.get(config) + "\n";
  }
  return out;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) { assign(config, assignment, nullptr); }

void apply_environment(RunConfig& config) {
  const char* seed = std::getenv("PMIX_SEED");
  if (seed != nullptr && *seed != '\0') config.data.seed = parse_number<std::uint64_t>("PMIX_SEED", seed);
}

NetworkConfig network_config(const RunConfig& c) {
  if (c.widths.empty()) throw ConfigError("net.widths is empty");
  if (c.blocks.size() != c.widths.size() || c.ratios.size() != c.widths.size())
    throw ConfigError("net.widths, net.blocks and net.ratios need one entry per level");
  NetworkConfig n;
  for (std::size_t l = 0; l < c.widths.size(); ++l) n.levels.push_back({c.widths[l], c.blocks[l], c.ratios[l]});
  n.k = c.k;
  switch (c.data.task) {
    case Task::Classification: n.head = ClassificationHead{c.data.classes, c.dropout}; break;
    case Task::Segmentation: n.head = DenseHead{c.data.classes}; break;
    case Task::Reconstruction: n.head = DenseHead{3}; break;
  }
  n.use_intra = c.intra;
  n.use_inter = c.inter;
  n.use_hier = c.hier;
  n.variant = c.variant;
  n.reduction = c.reduction;
  n.expansion = c.expansion;
  n.positional_encoding = c.positional_encoding;
  n.g1_nonlinear = c.g1_nonlinear;
  n.token_positional_encoding = c.token_positional_encoding;
  n.fps_start = c.fps_start;
  try {
    n.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return n;
}

TrainOptions train_options(const RunConfig& c) {
  if (c.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (c.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(c.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  TrainOptions t;
  t.epochs = c.epochs;
  t.batch = c.batch;
  t.sgd = {c.lr, c.momentum, c.weight_decay};
  t.clip_norm = c.clip_norm;
  t.schedule = c.schedule;
  t.milestones = c.milestones;
  t.lr_factor = c.lr_factor;
  t.seed = c.train_seed;
  return t;
}

}  // namespace pmx
