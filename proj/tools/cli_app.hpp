#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trim3d/trim3d.hpp"

namespace trim3d::cli {

enum class Command { Simulate, Analyze, Compare, Trace };

constexpr std::string_view to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Analyze: return "analyze";
    case Command::Compare: return "compare";
    case Command::Trace: return "trace";
  }
  return "?";
}

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

struct RunConfig {
  Command command = Command::Simulate;
  std::vector<LayerConfig> layers;
  std::string topology;  // empty for custom layers
  ArchConfig arch;
  CountingConvention counting = CountingConvention::IfmapOnly;
  bool count_spill = true;
  std::uint64_t seed = 1;
  std::string out_dir = "trim3d_out";
  std::optional<CycleWindow> trace_window;
  bool ramp = false;
  std::string ifmap_path;
  std::string weights_path;
  int jobs = 1;
};

namespace detail {

inline std::vector<int> parse_ints(const std::string& text, std::size_t expected, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::UsageError, std::string(flag) + ": '" + item + "' is not an integer");
    }
  }
  if (out.size() != expected) {
    fail(ErrorCode::UsageError, std::string(flag) + " expects " + std::to_string(expected) +
                                    " comma-separated integers, got '" + text + "'");
  }
  return out;
}

inline CycleWindow parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) fail(ErrorCode::UsageError, "--trace-window expects A:B, got '" + text + "'");
  try {
    const auto a = std::stoull(text.substr(0, colon));
    const auto b = std::stoull(text.substr(colon + 1));
    if (a > b) fail(ErrorCode::UsageError, "--trace-window start is after its end");
    return {a, b};
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorCode::UsageError, "--trace-window expects two cycle numbers, got '" + text + "'");
  }
}

}  // namespace detail

/// Parses a command line (args[0] is the program name). Returns nullopt after
/// printing help. Values from --config files are overridden by flags.
inline std::optional<RunConfig> parse_run_config(std::vector<std::string> args, std::ostream& out = std::cout) {
  CLI::App app{"Cycle-accurate model of a multi-core weight-stationary convolution array with input recycling"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1, 1);
  app.fallthrough();

  auto* sim = app.add_subcommand("simulate", "simulate layers, check against the golden model and the cost model");
  auto* ana = app.add_subcommand("analyze", "closed-form metrics per layer");
  auto* cmp = app.add_subcommand("compare", "3D vs TrIM-style improvement table under every counting convention");
  auto* trc = app.add_subcommand("trace", "simulate one layer and dump a per-cycle state trace");

  std::vector<std::string> layer_specs;
  std::string topology, layers_file, arch_text, shadow = "on", counting = "ifmap", spill = "on", window,
                                                 pattern = "random", ifmap_path, weights_path, out_dir = "trim3d_out";
  std::uint64_t seed = 1;
  std::optional<int> stride;
  int jobs = 1;

  app.add_option("--layer", layer_specs, "layer W,H,C,F,K,S,P (repeatable)");
  app.add_option("--topology", topology, "built-in network")->check(CLI::IsMember({"vgg16", "alexnet"}));
  app.add_option("--layers-file", layers_file, "layer table, one 'W H C F K S P' per line");
  app.add_option("--arch", arch_text, "P_I,P_O,K_hw (default 8,8,3)");
  app.add_option("--shadow", shadow, "shadow registers")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--counting", counting, "OPs/Access denominator")->check(CLI::IsMember({"ifmap", "ifmap+w", "all"}));
  app.add_option("--spill", spill, "count psum spill traffic")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--seed", seed, "seed for generated tensors");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--trace-window", window, "cycles A:B (half-open) to record");
  app.add_option("--stride", stride, "stride override for --layer");
  app.add_option("--ifmap-pattern", pattern, "generated ifmaps")->check(CLI::IsMember({"random", "ramp"}));
  app.add_option("--ifmap", ifmap_path, "ifmap file (text or .bin), channel-major");
  app.add_option("--weights", weights_path, "filter file (text or .bin), filter-major");
  app.add_option("--jobs", jobs, "worker threads for multi-layer simulation")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::UsageError, e.what());
  }

  RunConfig cfg;
  if (sim->parsed()) cfg.command = Command::Simulate;
  if (ana->parsed()) cfg.command = Command::Analyze;
  if (cmp->parsed()) cfg.command = Command::Compare;
  if (trc->parsed()) cfg.command = Command::Trace;

  const int sources = (layer_specs.empty() ? 0 : 1) + (topology.empty() ? 0 : 1) + (layers_file.empty() ? 0 : 1);
  if (sources > 1) fail(ErrorCode::ConflictingFlags, "use only one of --layer, --topology, --layers-file");
  if (sources == 0) fail(ErrorCode::UsageError, "no layers given: pass --layer, --topology or --layers-file");
  if (stride && layer_specs.empty()) fail(ErrorCode::ConflictingFlags, "--stride only applies to --layer");

  for (const auto& spec : layer_specs) {
    auto v = detail::parse_ints(spec, 7, "--layer");
    if (stride) v[5] = *stride;
    cfg.layers.push_back(make_layer_config(v[0], v[1], v[2], v[3], v[4], v[5], v[6]));
  }
  if (!topology.empty()) {
    cfg.topology = topology;
    cfg.layers = topology_by_name(topology);
  }
  if (!layers_file.empty()) {
    std::ifstream is(layers_file);
    if (!is) fail(ErrorCode::IoError, "cannot open " + layers_file);
    cfg.layers = read_layer_table(is);
    if (cfg.layers.empty()) fail(ErrorCode::UsageError, layers_file + " lists no layers");
  }

  if (!arch_text.empty()) {
    const auto v = detail::parse_ints(arch_text, 3, "--arch");
    cfg.arch.cores = v[0];
    cfg.arch.slices_per_core = v[1];
    cfg.arch.kernel_hw = v[2];
  }
  cfg.arch.shadow_enabled = shadow == "on";
  cfg.arch.validate();
  cfg.counting = parse_counting(counting);
  cfg.count_spill = spill == "on";
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.ramp = pattern == "ramp";
  cfg.ifmap_path = ifmap_path;
  cfg.weights_path = weights_path;
  cfg.jobs = jobs;
  if (!window.empty()) cfg.trace_window = detail::parse_window(window);

  const bool simulates = cfg.command == Command::Simulate || cfg.command == Command::Trace;
  if (simulates) {
    for (const auto& l : cfg.layers) {
      if (l.stride != 1) {
        fail(ErrorCode::UsageError, "layer " + l.label() + " has stride " + std::to_string(l.stride) +
                                        "; the simulator streams stride-1 layers only (use analyze or compare)");
      }
    }
  } else if (!ifmap_path.empty() || !weights_path.empty() || pattern != "random" || !window.empty()) {
    fail(ErrorCode::ConflictingFlags, "tensor and trace flags only apply to simulate and trace");
  }
  if ((!ifmap_path.empty() || !weights_path.empty()) && cfg.layers.size() != 1) {
    fail(ErrorCode::ConflictingFlags, "--ifmap/--weights need exactly one layer");
  }
  if (!ifmap_path.empty() && cfg.ramp) fail(ErrorCode::ConflictingFlags, "--ifmap and --ifmap-pattern ramp conflict");
  if (cfg.command == Command::Trace && cfg.layers.size() != 1) {
    fail(ErrorCode::UsageError, "trace takes exactly one layer");
  }
  return cfg;
}

struct LayerRun {
  SimulationRecord record;
  std::vector<TensorO> ofmaps;
  std::optional<SimTrace> trace;
};

/// Tensors for layer `index`: from files when given, otherwise generated from
/// the seed and the layer index.
inline std::pair<std::vector<TensorI>, FilterBank> layer_tensors(const RunConfig& cfg, const LayerConfig& l,
                                                                 std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::vector<TensorI> ifmaps;
  if (!cfg.ifmap_path.empty()) {
    ifmaps = load_ifmaps(cfg.ifmap_path, l);
  } else if (cfg.ramp) {
    ifmaps = ramp_ifmaps(l);
  } else {
    ifmaps = random_ifmaps(l.in_channels, l.ifmap_height, l.ifmap_width, rng);
  }
  FilterBank filters = cfg.weights_path.empty() ? random_filters(l.num_filters, l.in_channels, l.kernel_size, rng)
                                                : load_filters(cfg.weights_path, l);
  return {std::move(ifmaps), std::move(filters)};
}

inline LayerRun simulate_one(const RunConfig& cfg, std::size_t index, bool want_trace) {
  const auto& l = cfg.layers[index];
  auto [ifmaps, filters] = layer_tensors(cfg, l, index);
  const auto golden = golden_layer(l, ifmaps, filters);

  RunOptions opt;
  opt.count_spill = cfg.count_spill;
  if (want_trace) opt.trace_window = cfg.trace_window.value_or(CycleWindow{0, 4096});
  auto res = simulate_layer(cfg.arch, l, std::move(ifmaps), std::move(filters), opt);

  LayerRun run;
  auto& rec = run.record;
  rec.layer = l;
  rec.counters = res.counters;
  rec.cycles = res.cycles;
  rec.passes = res.audits.size();
  rec.golden_match = res.ofmaps == golden;
  rec.single_fetch = std::all_of(res.audits.begin(), res.audits.end(), [](const auto& a) { return a.single_fetch(); });
  for (const auto& a : res.audits) rec.rereads += a.rereads;
  try {
    compare_counters(model_counters(l, cfg.arch, cfg.arch.shadow_enabled ? AccessMode::ThreeD : AccessMode::TrimCompat,
                                    cfg.count_spill),
                     res.counters);
    rec.model_match = true;
  } catch (const Error& e) {
    rec.model_error = e.what();
  }
  run.ofmaps = std::move(res.ofmaps);
  if (want_trace) run.trace = std::move(res.trace);
  return run;
}

/// Runs every layer on up to cfg.jobs workers; results keep layer order.
inline std::vector<LayerRun> simulate_all(const RunConfig& cfg, bool want_trace) {
  std::vector<LayerRun> runs(cfg.layers.size());
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(cfg.jobs, static_cast<int>(runs.size()))));
  if (workers == 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) runs[i] = simulate_one(cfg, i, want_trace);
    return runs;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(runs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < runs.size(); i = next++) {
        try {
          runs[i] = simulate_one(cfg, i, want_trace);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return runs;
}

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) { write_text_file(p.string(), text); }

inline void write_ofmap_file(const std::filesystem::path& p, const std::vector<TensorO>& ofmaps) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot open " + p.string());
  write_ofmaps(os, ofmaps);
}

inline int run_simulate(const RunConfig& cfg, std::ostream& out) {
  const bool want_trace = cfg.command == Command::Trace;
  const auto runs = simulate_all(cfg, want_trace);
  const auto dir = prepare_out(cfg);

  std::vector<SimulationRecord> recs;
  for (const auto& r : runs) recs.push_back(r.record);
  write_file(dir / "report.json", simulation_json(recs, cfg.arch, cfg.seed, cfg.count_spill).dump(2) + "\n");
  std::ostringstream csv;
  write_simulation_csv(csv, recs);
  write_file(dir / "report.csv", csv.str());
  if (runs.size() == 1) {
    write_ofmap_file(dir / "ofmap.bin", runs.front().ofmaps);
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) write_ofmap_file(dir / ("ofmap_" + std::to_string(i) + ".bin"), runs[i].ofmaps);
  }
  if (want_trace) write_file(dir / "trace.txt", dump_trace(*runs.front().trace));

  bool ok = true;
  out << std::left << std::setw(4) << "#" << std::setw(20) << "layer" << std::right << std::setw(14) << "ifmap_reads"
      << std::setw(12) << "cycles" << "  golden  fetch-once  model\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& s = recs[i];
    ok = ok && s.ok(cfg.arch.shadow_enabled);
    out << std::left << std::setw(4) << i << std::setw(20) << s.layer.label() << std::right << std::setw(14)
        << s.counters.ifmap_reads << std::setw(12) << s.cycles << "  " << std::setw(6)
        << (s.golden_match ? "ok" : "FAIL") << "  " << std::setw(10)
        << (cfg.arch.shadow_enabled ? (s.single_fetch ? "ok" : "FAIL") : "n/a") << "  " << std::setw(5)
        << (s.model_match ? "ok" : "FAIL") << '\n';
    if (!s.model_error.empty()) out << "    model mismatch: " << s.model_error << '\n';
  }
  out << "shadow=" << (cfg.arch.shadow_enabled ? "on" : "off") << " seed=" << cfg.seed << " reports in " << dir.string()
      << '\n';
  return ok ? kOk : kCheckFailed;
}

inline void print_metrics(std::ostream& out, const MetricsReport& r) {
  out << std::left << std::setw(4) << "#" << std::setw(22) << "layer" << std::right << std::setw(16) << "ops"
      << std::setw(14) << "acc_3d" << std::setw(14) << "acc_trim" << std::setw(10) << "ratio" << std::setw(10)
      << "ovh%" << std::setw(12) << "cycles" << std::setw(7) << "util" << '\n';
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& m = r.layers[i];
    out << std::left << std::setw(4) << i << std::setw(22) << m.layer.label() << std::right << std::setw(16) << m.ops
        << std::setw(14) << accesses_under(m.accesses_3d, r.convention) << std::setw(14)
        << accesses_under(m.accesses_trim, r.convention) << std::setw(10) << m.improvement.str(2) << std::setw(10)
        << m.overhead_percent.str(2) << std::setw(12) << m.cycles << std::setw(7) << m.utilization.str(2) << '\n';
  }
}

inline int run_analyze(const RunConfig& cfg, std::ostream& out) {
  const auto report = improvement_table(cfg.layers, cfg.arch, cfg.counting, cfg.count_spill);
  const auto dir = prepare_out(cfg);
  write_file(dir / "report.json", metrics_json(report, cfg.topology).dump(2) + "\n");
  std::ostringstream csv;
  write_metrics_csv(csv, report);
  write_file(dir / "report.csv", csv.str());
  print_metrics(out, report);
  out << "convention=" << to_string(cfg.counting) << " spill=" << (cfg.count_spill ? "on" : "off")
      << " improvement min " << report.min_improvement().str(2) << " max " << report.max_improvement().str(2)
      << " peak " << format_tops(report.peak_ops) << '\n';
  return kOk;
}

/// Layers small enough to cross-check the model against a simulation inside a CLI run.
inline bool cheap_to_simulate(const LayerConfig& l, const ArchConfig& arch) {
  if (l.stride != 1) return false;
  const auto work = static_cast<std::uint64_t>(l.padded_width()) * static_cast<std::uint64_t>(l.padded_height()) *
                    static_cast<std::uint64_t>(l.in_channels) * static_cast<std::uint64_t>(l.num_filters);
  return work <= 200000 && std::max(l.out_width + arch.kernel_hw - 1, 2 * arch.kernel_hw) <= arch.buffer_capacity;
}

inline int run_compare(const RunConfig& cfg, std::ostream& out) {
  const auto dir = prepare_out(cfg);
  const auto report = improvement_table(cfg.layers, cfg.arch, cfg.counting, cfg.count_spill);
  auto j = metrics_json(report, cfg.topology);
  j["kind"] = "compare";
  const auto target = target_range(cfg.topology);

  bool ok = true;
  auto& convs = j["conventions"] = nlohmann::ordered_json::array();
  for (auto conv : {CountingConvention::IfmapOnly, CountingConvention::IfmapWeights, CountingConvention::AllTraffic}) {
    const auto r = improvement_table(cfg.layers, cfg.arch, conv, cfg.count_spill);
    bool identity = true;
    for (const auto& m : r.layers) identity = identity && m.improvement == slice_factor() * m.access_ratio;
    ok = ok && identity;
    nlohmann::ordered_json c = {{"convention", std::string(to_string(conv))},
                                {"min_improvement", r.min_improvement().str(2)},
                                {"max_improvement", r.max_improvement().str(2)},
                                {"decomposition_identity", identity}};
    out << "convention " << std::left << std::setw(8) << to_string(conv) << std::right << " min "
        << r.min_improvement().str(2) << " max " << r.max_improvement().str(2);
    if (target) {
      const bool in = within(r, *target);
      c["within_target"] = in;
      out << " target [" << target->low.str(2) << ", " << target->high.str(2) << "] +/-0.15 "
          << (in ? "inside" : "outside");
    }
    out << '\n';
    convs.push_back(std::move(c));
  }

  auto& checks = j["model_checks"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    if (!cheap_to_simulate(l, cfg.arch)) continue;
    for (auto mode : {AccessMode::ThreeD, AccessMode::TrimCompat}) {
      nlohmann::ordered_json c = {{"index", i}, {"mode", std::string(to_string(mode))}};
      try {
        validate_model_vs_sim(l, cfg.arch, mode, cfg.seed, cfg.count_spill);
        c["match"] = true;
      } catch (const Error& e) {
        c["match"] = false;
        c["error"] = e.what();
        out << "model mismatch on layer " << i << " (" << to_string(mode) << "): " << e.what() << '\n';
        ok = false;
      }
      checks.push_back(std::move(c));
    }
  }
  j["ok"] = ok;

  write_file(dir / "report.json", j.dump(2) + "\n");
  std::ostringstream csv;
  write_metrics_csv(csv, report);
  write_file(dir / "report.csv", csv.str());
  print_metrics(out, report);
  return ok ? kOk : kCheckFailed;
}

inline int run(const RunConfig& cfg, std::ostream& out = std::cout) {
  switch (cfg.command) {
    case Command::Simulate:
    case Command::Trace: return run_simulate(cfg, out);
    case Command::Analyze: return run_analyze(cfg, out);
    case Command::Compare: return run_compare(cfg, out);
  }
  return kRuntime;
}

/// Full front end: parse, run, map errors to exit codes.
inline int main_entry(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto cfg = parse_run_config(std::move(args), out);
    if (!cfg) return kOk;
    return run(*cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::UsageError:
      case ErrorCode::ConflictingFlags:
      case ErrorCode::NonPositiveDim:
      case ErrorCode::KernelLargerThanPaddedIfmap:
      case ErrorCode::StrideIndivisible:
      case ErrorCode::UnsupportedStrideForSim:
      case ErrorCode::InvalidArch:
        return kUsage;
      case ErrorCode::ModelMismatch:
        return kCheckFailed;
      default:
        return kRuntime;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace trim3d::cli
