#include "pointmixer/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pointmixer/cli/checks.hpp"
#include "pointmixer/cli/cloud_io.hpp"
#include "pointmixer/cli/rfield.hpp"
#include "pointmixer/nn/checkpoint.hpp"

namespace pmx {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> metric_names(Task task) {
  switch (task) {
    case Task::Classification: return {"oa", "macc"};
    case Task::Segmentation: return {"miou", "macc", "oa"};
    case Task::Reconstruction: return {"cd", "acc", "cp", "f1"};
  }
  return {};
}

std::string log_header(Task task) {
  std::string h = "epoch,lr,loss";
  for (const auto& m : metric_names(task)) h += "," + m;
  return h;
}

std::string log_row(const EpochLog& e, Task task) {
  std::string r = std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.loss);
  for (const auto& m : metric_names(task)) r += "," + (e.metrics.has(m) ? format_double(e.metrics.at(m)) : "");
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out << line << '\n';
}

const char* kNextEpoch = "state/next_epoch";

void save_state(const fs::path& path, const Network<double>& net, Index next_epoch) {
  auto entries = to_entries(net.params);
  for (auto& e : momentum_entries(net.params)) entries.push_back(std::move(e));
  entries.push_back(CheckpointEntry{kNextEpoch, {1}, {static_cast<double>(next_epoch)}});
  save_checkpoint(path.string(), entries);
}

Index load_state(const fs::path& path, Network<double>& net) {
  auto entries = load_checkpoint(path.string());
  Index next = -1;
  std::erase_if(entries, [&](const CheckpointEntry& e) {
    if (e.name != kNextEpoch) return false;
    if (e.data.size() == 1) next = static_cast<Index>(e.data[0]);
    return true;
  });
  if (next < 0) throw CheckpointError(path.string() + " has no resume epoch");
  load_entries(net.params, entries);
  return next;
}

// ---- gen -----------------------------------------------------------------

struct GenArgs {
  std::string task = "cls";
  std::string out;
  std::string rotation = "up";
  std::uint64_t seed = 1;
  Index clouds = 600;
  Index test_clouds = -1;
  Index points = 256;
  Index input_points = 0;
  int classes = -1;
  double noise = 0.01;
};

int cmd_gen(const GenArgs& a, bool seed_given, std::ostream& out, std::ostream& err) {
  DatasetSpec spec;
  const auto task = parse_task(a.task);
  if (!task) {
    err << "gen: unknown task '" << a.task << "'\n";
    return kExitUsage;
  }
  const auto rot = parse_rotation(a.rotation);
  if (!rot) {
    err << "gen: unknown rotation '" << a.rotation << "'\n";
    return kExitUsage;
  }
  spec.task = *task;
  spec.rotation = *rot;
  spec.seed = a.seed;
  if (!seed_given) {
    RunConfig env;
    env.data.seed = a.seed;
    try {
      apply_environment(env);
    } catch (const ConfigError& e) {
      err << "gen: " << e.what() << "\n";
      return kExitUsage;
    }
    spec.seed = env.data.seed;
  }
  spec.train_clouds = a.clouds;
  spec.test_clouds = a.test_clouds >= 0 ? a.test_clouds : a.clouds / 4;
  spec.points = a.points;
  spec.input_points = a.input_points;
  spec.classes = a.classes > 0 ? a.classes : (spec.task == Task::Segmentation ? 2 : 3);
  spec.noise = a.noise;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    err << "gen: " << e.what() << "\n";
    return kExitUsage;
  }
  const Dataset data = gen_dataset(spec);
  try {
    write_dataset(a.out, data);
  } catch (const IoError& e) {
    err << "gen: " << e.what() << "\n";
    return kExitIo;
  }
  out << "wrote " << data.train.size() << " train and " << data.test.size() << " test " << task_name(spec.task)
      << " clouds to " << a.out << "\n";
  return kExitOk;
}

// ---- shared run setup ----------------------------------------------------

struct RunArgs {
  std::string config;
  std::vector<std::string> sets;
};

RunConfig resolve_config(const RunArgs& a) {
  RunConfig c = a.config.empty() ? RunConfig{} : load_config(a.config);
  for (const auto& s : a.sets) apply_override(c, s);
  apply_environment(c);
  return c;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  RunArgs run;
  std::string out;
  bool resume = false;
  Index until = -1;
  bool ablation = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  NetworkConfig netcfg;
  TrainOptions topt;
  Dataset data;
  try {
    cfg = resolve_config(a.run);
    if (!a.out.empty()) cfg.out_dir = a.out;
    netcfg = network_config(cfg);
    topt = train_options(cfg);
    data = load_run_data(cfg);
    check_compatible(netcfg, data.spec);
  } catch (const IoError& e) {
    err << "train: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "train: " << e.what() << "\n";
    return kExitUsage;
  }

  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  const bool existed = fs::exists(dir);
  fs::create_directories(dir, ec);
  if (ec) {
    err << "train: cannot create " << dir.string() << ": " << ec.message() << "\n";
    return kExitIo;
  }

  if (a.ablation) {
    try {
      const auto rows = run_ablation(cfg, data, [&](const AblationRow& r) {
        if (!a.quiet)
          out << "ablation intra=" << r.intra << " inter=" << r.inter << " hier=" << r.hier << " done\n" << std::flush;
      });
      const std::string table = format_ablation(rows);
      out << table;
      std::string csv = "intra,inter,hier,params,loss";
      for (const auto& m : metric_names(cfg.data.task)) csv += "," + m;
      csv += "\n";
      for (const auto& r : rows) {
        csv += std::to_string(r.intra) + "," + std::to_string(r.inter) + "," + std::to_string(r.hier) + "," +
               std::to_string(r.params) + "," + format_double(r.final_loss);
        for (const auto& m : metric_names(cfg.data.task))
          csv += "," + (r.metrics.has(m) ? format_double(r.metrics.at(m)) : "");
        csv += "\n";
      }
      write_text(dir / "config.txt", render_config(cfg));
      write_text(dir / "ablation.csv", csv);
    } catch (const NonFiniteError& e) {
      err << "train: " << e.what() << "\n";
      return kExitNonFinite;
    } catch (const IoError& e) {
      err << "train: " << e.what() << "\n";
      return kExitIo;
    }
    return kExitOk;
  }

  const fs::path config_path = dir / "config.txt", log_path = dir / "log.csv", state_path = dir / "state.pmix",
                 ckpt_path = dir / "checkpoint.pmix";
  Network<double> net = build_network<double>(netcfg, cfg.net_seed);
  const bool resuming = a.resume && fs::exists(state_path);
  try {
    if (resuming) {
      topt.start_epoch = load_state(state_path, net);
      if (!a.quiet) out << "resuming at epoch " << topt.start_epoch << "\n";
    } else {
      write_text(log_path, log_header(cfg.data.task) + "\n");
    }
    write_text(config_path, render_config(cfg));
  } catch (const std::exception& e) {
    err << "train: " << e.what() << "\n";
    return kExitIo;
  }

  topt.end_epoch = a.until;
  topt.on_epoch = [&](const EpochLog& e) {
    const std::string row = log_row(e, cfg.data.task);
    append_line(log_path, row);
    save_state(state_path, net, e.epoch + 1);
    if (!a.quiet) out << row << "\n" << std::flush;
  };
  try {
    train(net, data, topt);
    save_checkpoint(ckpt_path.string(), to_entries(net.params));
    if (topt.start_epoch >= topt.epochs || topt.epochs == 0) save_state(state_path, net, topt.epochs);
  } catch (const NonFiniteError& e) {
    err << "train: " << e.what() << "\n";
    if (!resuming) {
      if (!existed) {
        fs::remove_all(dir, ec);
      } else {
        for (const auto& p : {config_path, log_path, state_path, ckpt_path}) fs::remove(p, ec);
      }
    }
    return kExitNonFinite;
  } catch (const IoError& e) {
    err << "train: " << e.what() << "\n";
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "train: " << e.what() << "\n";
    return kExitIo;
  }
  if (!a.quiet) out << "checkpoint " << ckpt_path.string() << "\n";
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  RunArgs run;
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string format = "kv";
};

int cmd_eval(EvalArgs a, std::ostream& out, std::ostream& err) {
  if (a.split != "test" && a.split != "train") {
    err << "eval: --split must be test or train\n";
    return kExitUsage;
  }
  if (a.format != "kv" && a.format != "csv") {
    err << "eval: --format must be kv or csv\n";
    return kExitUsage;
  }
  if (a.run.config.empty()) a.run.config = (fs::path(a.checkpoint).parent_path() / "config.txt").string();
  RunConfig cfg;
  NetworkConfig netcfg;
  Dataset data;
  try {
    cfg = resolve_config(a.run);
    if (!a.data.empty()) cfg.data_dir = a.data;
    netcfg = network_config(cfg);
    data = load_run_data(cfg);
    check_compatible(netcfg, data.spec);
  } catch (const IoError& e) {
    err << "eval: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "eval: " << e.what() << "\n";
    return kExitUsage;
  }
  Network<double> net = build_network<double>(netcfg, cfg.net_seed);
  std::vector<CheckpointEntry> entries;
  try {
    entries = load_checkpoint(a.checkpoint);
  } catch (const CheckpointError& e) {
    err << "eval: " << e.what() << "\n";
    return kExitIo;
  }
  try {
    load_entries(net.params, entries);
  } catch (const CheckpointError& e) {
    // readable, but not this network: wrong head, task or architecture
    err << "eval: checkpoint does not fit the configured network: " << e.what() << "\n";
    return kExitUsage;
  }
  const auto& samples = a.split == "train" ? data.train : data.test;
  const MetricReport report = evaluate(net, samples, data.spec.task, data.spec.classes);
  if (a.format == "kv")
    out << report.to_kv();
  else
    out << report.csv_header() << "\n" << report.csv_row() << "\n";
  return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

struct GradArgs {
  double h = 1e-5;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  std::string fault;
  bool quick = false;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.h > 0.0)) {
    err << "gradcheck: --h must be positive\n";
    return kExitUsage;
  }
  inject_backward_fault(a.fault);
  std::vector<SuiteResult> results;
  try {
    results = gradcheck_suite(a.h, a.seed, !a.quick);
  } catch (const std::exception& e) {
    inject_backward_fault("");
    err << "gradcheck: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  inject_backward_fault("");
  const SuiteResult* worst = nullptr;
  std::vector<std::string> failing_ops;
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_error < a.tol;
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-16s %.3e  %s\n", pass ? "ok" : "FAIL", r.name.c_str(), r.max_error,
                  r.worst.c_str());
    out << line;
    if (!pass) {
      ok = false;
      if (r.primitive) failing_ops.push_back(r.name);
    }
    if (worst == nullptr || r.max_error > worst->max_error) worst = &r;
  }
  if (worst != nullptr) out << "worst: " << worst->name << " " << format_double(worst->max_error) << " at " << worst->worst << "\n";
  if (!failing_ops.empty()) {
    out << "failing ops:";
    for (const auto& op : failing_ops) out << " " << op;
    out << "\n";
  }
  out << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitCheckFailed;
}

// ---- bench ---------------------------------------------------------------

int cmd_bench(const BenchOptions& opt, const std::string& format, std::ostream& out, std::ostream& err) {
  if (opt.iterations < 20) {
    err << "bench: --iters must be at least 20\n";
    return kExitUsage;
  }
  if (format != "table" && format != "csv") {
    err << "bench: --format must be table or csv\n";
    return kExitUsage;
  }
  std::vector<BenchRow> rows;
  try {
    rows = bench_variants(opt);
  } catch (const std::invalid_argument& e) {
    err << "bench: " << e.what() << "\n";
    return kExitUsage;
  }
  if (format == "csv") {
    out << "variant,params,median_ms,peak_bytes\n";
    for (const auto& r : rows)
      out << variant_name(r.variant) << "," << r.params << "," << format_double(r.median_ms) << "," << r.peak_bytes
          << "\n";
    return kExitOk;
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %12s %12s\n", "variant", "params", "median_ms", "peak_kib");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %10ld %12.3f %12.1f\n", variant_name(r.variant), static_cast<long>(r.params),
                  r.median_ms, static_cast<double>(r.peak_bytes) / 1024.0);
    out << line;
  }
  out << "points=" << opt.points << " k=" << opt.k << " channels=" << opt.channels << " iters=" << opt.iterations
      << (opt.single_precision ? " float32" : " float64") << "\n";
  return kExitOk;
}

// ---- rfield --------------------------------------------------------------

struct RfieldArgs {
  Index hierarchies = 50;
  Index points = 512;
  Index k = 16;
  double ratio = 0.25;
  std::uint64_t seed = 0;
};

int cmd_rfield(const RfieldArgs& a, std::ostream& out, std::ostream& err) {
  if (a.hierarchies < 1 || a.points < 2 || a.k < 1 || !(a.ratio > 0.0 && a.ratio <= 1.0)) {
    err << "rfield: need hierarchies >= 1, points >= 2, k >= 1 and ratio in (0, 1]\n";
    return kExitUsage;
  }
  const RfieldSummary s = rfield_analysis(a.hierarchies, a.points, a.k, a.ratio, a.seed);
  char line[160];
  out << "hierarchies=" << s.hierarchies << " points=" << a.points << " k=" << s.k << " ratio=" << format_double(a.ratio)
      << "\n";
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%-20s %8.3f\n", name, v);
    out << line;
  };
  row("intra", s.mean_intra);
  row("intra+inter", s.mean_intra_inter);
  row("hier_up(inverse)", s.mean_hier_up);
  row("trilinear(3-nn)", s.mean_trilinear);
  out << "check intra<=k: " << (s.intra_bounded ? "ok" : "FAIL") << " (max " << s.max_intra << ")\n";
  out << "check intra+inter>=intra: " << (s.inter_superset ? "ok" : "FAIL") << "\n";
  out << "check hier_up>=trilinear: " << (s.hier_dominates ? "ok" : "FAIL") << " (" << s.hier_failures
      << " hierarchies below)\n";
  return s.ok() ? kExitOk : kExitCheckFailed;
}

}  // namespace

Dataset load_run_data(const RunConfig& config) {
  if (config.data_dir.empty()) {
    config.data.validate();
    return gen_dataset(config.data);
  }
  Dataset data = read_dataset(config.data_dir);
  if (data.spec.task != config.data.task)
    throw ConfigError(std::string("dataset holds ") + task_name(data.spec.task) + " clouds but the run is configured for " +
                      task_name(config.data.task));
  if (data.spec.classes != config.data.classes)
    throw ConfigError("dataset has " + std::to_string(data.spec.classes) + " classes, config expects " +
                      std::to_string(config.data.classes));
  return data;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const Dataset& data,
                                      const std::function<void(const AblationRow&)>& progress) {
  std::vector<AblationRow> rows;
  for (int hier = 1; hier >= 0; --hier)
    for (int inter = 1; inter >= 0; --inter)
      for (int intra = 1; intra >= 0; --intra) {
        RunConfig c = config;
        c.intra = intra;
        c.inter = inter;
        c.hier = hier;
        const NetworkConfig netcfg = network_config(c);
        Network<double> net = build_network<double>(netcfg, c.net_seed);
        TrainOptions t = train_options(c);
        t.evaluate_each_epoch = false;
        const auto log = train(net, data, t);
        AblationRow r;
        r.intra = intra;
        r.inter = inter;
        r.hier = hier;
        r.params = param_count(net);
        r.final_loss = log.empty() ? 0.0 : log.back().loss;
        r.metrics = evaluate(net, data.test, data.spec.task, data.spec.classes);
        if (progress) progress(r);
        rows.push_back(std::move(r));
      }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-6s %-6s %9s %9s", "intra", "inter", "hier", "params", "loss");
  out << line;
  const std::vector<std::pair<std::string, double>> none;
  const auto& names = rows.empty() ? none : rows.front().metrics.values;
  for (const auto& [name, v] : names) {
    std::snprintf(line, sizeof line, " %8s", name.c_str());
    out << line;
  }
  out << "\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6s %-6s %-6s %9ld %9.4f", r.intra ? "yes" : "-", r.inter ? "yes" : "-",
                  r.hier ? "yes" : "-", static_cast<long>(r.params), r.final_loss);
    out << line;
    for (const auto& [name, v] : r.metrics.values) {
      std::snprintf(line, sizeof line, " %8.4f", v);
      out << line;
    }
    out << "\n";
  }
  return out.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PointMixer desk-scale toolkit", "pointmixer"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "write a synthetic dataset directory");
  g->add_option("--task", gen.task, "cls, seg or recon")->capture_default_str();
  auto* gen_seed = g->add_option("--seed", gen.seed, "dataset seed (default PMIX_SEED, else 1)");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--clouds", gen.clouds, "training clouds")->capture_default_str();
  g->add_option("--test-clouds", gen.test_clouds, "test clouds (default clouds/4)");
  g->add_option("--points", gen.points, "points per cloud")->capture_default_str();
  g->add_option("--input-points", gen.input_points, "recon input points (0 = points/2)")->capture_default_str();
  g->add_option("--classes", gen.classes, "classes or parts (default 3 cls, 2 seg)");
  g->add_option("--noise", gen.noise, "jitter sigma")->capture_default_str();
  g->add_option("--rotation", gen.rotation, "none, up or full")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train from a config file, writing config.txt, log.csv and checkpoint.pmix");
  t->add_option("config", tr.run.config, "config file (key = value lines); defaults apply when omitted");
  t->add_option("--set", tr.run.sets, "override one key, e.g. --set train.epochs=5");
  t->add_option("--out", tr.out, "run directory (overrides out.dir)");
  t->add_flag("--resume", tr.resume, "continue from state.pmix in the run directory");
  t->add_option("--until", tr.until, "stop before this epoch (continue later with --resume)");
  t->add_flag("--ablation", tr.ablation, "train the 8 intra/inter/hier combinations and print a table");
  t->add_flag("--quiet", tr.quiet, "no per-epoch output");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "PMIX1 checkpoint")->required();
  e->add_option("--config", ev.run.config, "run config (default: config.txt beside the checkpoint)");
  e->add_option("--set", ev.run.sets, "override one config key");
  e->add_option("--data", ev.data, "dataset directory (default: regenerate from the config)");
  e->add_option("--split", ev.split, "test or train")->capture_default_str();
  e->add_option("--format", ev.format, "kv or csv")->capture_default_str();

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of every op, layer and a small network");
  gc->set_help_flag("--help", "Print this help message and exit");
  gc->add_option("--h", gr.h, "central difference step")->capture_default_str();
  gc->add_option("--seed", gr.seed, "input seed")->capture_default_str();
  gc->add_option("--tol", gr.tol, "relative error bound")->capture_default_str();
  gc->add_option("--fault", gr.fault, "test hook: negate the backward of this op");
  gc->add_flag("--quick", gr.quick, "skip the network checks");

  BenchOptions bo;
  std::string bench_format = "table";
  auto* b = app.add_subcommand("bench", "params, latency and tape memory of the four layer variants");
  b->add_option("--points", bo.points, "cloud size")->capture_default_str();
  b->add_option("--k", bo.k, "neighbors")->capture_default_str();
  b->add_option("--channels", bo.channels, "feature width")->capture_default_str();
  b->add_option("--iters", bo.iterations, "timed iterations (>= 20)")->capture_default_str();
  b->add_option("--seed", bo.seed, "input seed")->capture_default_str();
  b->add_flag("--float", bo.single_precision, "32-bit tensors");
  b->add_option("--format", bench_format, "table or csv")->capture_default_str();

  RfieldArgs rf;
  auto* r = app.add_subcommand("rfield", "receptive-field sizes by graph reachability");
  r->add_option("--hierarchies", rf.hierarchies, "random clouds")->capture_default_str();
  r->add_option("--points", rf.points, "points per cloud")->capture_default_str();
  r->add_option("--k", rf.k, "neighbors")->capture_default_str();
  r->add_option("--ratio", rf.ratio, "sampling ratio")->capture_default_str();
  r->add_option("--seed", rf.seed, "seed")->capture_default_str();

  RunArgs cf;
  auto* c = app.add_subcommand("config", "print the effective config (defaults with help when no file is given)");
  c->add_option("config", cf.config, "config file");
  c->add_option("--set", cf.sets, "override one key");

  std::vector<std::string> argv_s{"pointmixer"};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_s) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    err << "error: " << ex.what() << "\n\n" << target->help();
    return kExitUsage;
  }

  if (g->parsed()) return cmd_gen(gen, gen_seed->count() > 0, out, err);
  if (t->parsed()) return cmd_train(tr, out, err);
  if (e->parsed()) return cmd_eval(ev, out, err);
  if (gc->parsed()) return cmd_gradcheck(gr, out, err);
  if (b->parsed()) return cmd_bench(bo, bench_format, out, err);
  if (r->parsed()) return cmd_rfield(rf, out, err);
  if (c->parsed()) {
    try {
      const RunConfig cfg = resolve_config(cf);
      out << render_config(cfg, cf.config.empty() && cf.sets.empty());
    } catch (const IoError& ex) {
      err << "config: " << ex.what() << "\n";
      return kExitIo;
    } catch (const ConfigError& ex) {
      err << "config: " << ex.what() << "\n";
      return kExitUsage;
    }
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace pmx
