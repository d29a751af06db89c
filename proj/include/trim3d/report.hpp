#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trim3d/analytics.hpp"
#include "trim3d/error.hpp"
#include "trim3d/memory.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr std::uint32_t kOfmapVersion = 1;

/// Outcome of simulating one layer with its checks.
struct SimulationRecord {
  LayerConfig layer;
  AccessCounters counters;
  std::uint64_t cycles = 0;
  std::uint64_t passes = 0;
  bool golden_match = false;
  bool single_fetch = false;  // every pass audit clean (meaningful with shadow registers on)
  std::uint64_t rereads = 0;
  bool model_match = false;
  std::string model_error;

  bool ok(bool shadow) const { return golden_match && model_match && (!shadow || single_fetch); }
};

namespace detail {

inline nlohmann::ordered_json layer_json(const LayerConfig& l) {
  return {{"label", l.label()},   {"W", l.ifmap_width},  {"H", l.ifmap_height}, {"C", l.in_channels},
          {"F", l.num_filters},   {"K", l.kernel_size},  {"S", l.stride},       {"P", l.padding},
          {"H_O", l.out_height},  {"W_O", l.out_width}};
}

inline nlohmann::ordered_json counters_json(const AccessCounters& c) {
  return {{"ifmap_reads", c.ifmap_reads},
          {"weight_reads", c.weight_reads},
          {"ofmap_writes", c.ofmap_writes},
          {"psum_spill_writes", c.psum_spill_writes},
          {"psum_spill_reads", c.psum_spill_reads},
          {"total", c.total()}};
}

inline nlohmann::ordered_json arch_json(const ArchConfig& a) {
  return {{"P_I", a.cores},
          {"P_O", a.slices_per_core},
          {"K_hw", a.kernel_hw},
          {"pe_count", a.pe_count()},
          {"buffer_capacity", a.buffer_capacity},
          {"clock_hz", a.clock_hz},
          {"shadow", a.shadow_enabled}};
}

inline nlohmann::ordered_json rational_json(const Rational& r) {
  return {{"value", r.str(2)}, {"num", r.num()}, {"den", r.den()}};
}

}  // namespace detail

inline nlohmann::ordered_json metrics_json(const MetricsReport& r, const std::string& topology = {}) {
  nlohmann::ordered_json j;
  j["kind"] = "metrics";
  if (!topology.empty()) j["topology"] = topology;
  j["arch"] = detail::arch_json(r.arch);
  j["convention"] = std::string(to_string(r.convention));
  j["spill_counted"] = r.count_spill;
  j["n_slices"] = {{"3d-trim", n_slices(AccessMode::ThreeD)}, {"trim", n_slices(AccessMode::TrimCompat)}};
  j["slice_factor"] = detail::rational_json(slice_factor());
  j["peak_ops_per_second"] = r.peak_ops;
  j["peak"] = format_tops(r.peak_ops);
  auto& rows = j["layers"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& m = r.layers[i];
    rows.push_back({{"index", i},
                    {"layer", detail::layer_json(m.layer)},
                    {"ops", m.ops},
                    {"accesses_3d", detail::counters_json(m.accesses_3d)},
                    {"accesses_trim", detail::counters_json(m.accesses_trim)},
                    {"opas_3d", detail::rational_json(m.opas_3d)},
                    {"opas_trim", detail::rational_json(m.opas_trim)},
                    {"improvement", detail::rational_json(m.improvement)},
                    {"access_ratio", detail::rational_json(m.access_ratio)},
                    {"overhead_percent_trim", detail::rational_json(m.overhead_percent)},
                    {"overhead_percent_3d", "0.00"},
                    {"cycles", m.cycles},
                    {"utilization", detail::rational_json(m.utilization)}});
  }
  if (!r.layers.empty()) {
    j["summary"] = {{"min_improvement", r.min_improvement().str(2)}, {"max_improvement", r.max_improvement().str(2)}};
    if (auto t = target_range(topology)) {
      j["summary"]["target"] = {t->low.str(2), t->high.str(2)};
      j["summary"]["within_target"] = within(r, *t);
    }
  }
  return j;
}

/// Column set of the per-layer CSV; bump kCsvSchemaVersion when it changes.
inline const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> cols = {
      "index",        "label",         "W",         "H",          "C",           "F",
      "K",            "S",             "P",         "ops",        "ifmap_3d",    "ifmap_trim",
      "weight_reads", "ofmap_writes",  "spill_writes", "spill_reads", "accesses_3d", "accesses_trim",
      "opas_3d",      "opas_trim",     "improvement", "overhead_percent", "cycles", "utilization"};
  return cols;
}

inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  os << "# trim3d metrics schema v" << kCsvSchemaVersion << " convention=" << to_string(r.convention)
     << " spill=" << (r.count_spill ? "on" : "off") << '\n';
  const auto& cols = metrics_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    const auto& m = r.layers[i];
    const auto& l = m.layer;
    os << i << ",\"" << l.label() << "\"," << l.ifmap_width << ',' << l.ifmap_height << ',' << l.in_channels << ','
       << l.num_filters << ',' << l.kernel_size << ',' << l.stride << ',' << l.padding << ',' << m.ops << ','
       << m.accesses_3d.ifmap_reads << ',' << m.accesses_trim.ifmap_reads << ',' << m.accesses_3d.weight_reads << ','
       << m.accesses_3d.ofmap_writes << ',' << m.accesses_3d.psum_spill_writes << ','
       << m.accesses_3d.psum_spill_reads << ',' << accesses_under(m.accesses_3d, r.convention) << ','
       << accesses_under(m.accesses_trim, r.convention) << ',' << m.opas_3d.str(2) << ',' << m.opas_trim.str(2)
       << ',' << m.improvement.str(2) << ',' << m.overhead_percent.str(2) << ',' << m.cycles << ','
       << m.utilization.str(2) << '\n';
  }
}

inline nlohmann::ordered_json simulation_json(const std::vector<SimulationRecord>& recs, const ArchConfig& arch,
                                              std::uint64_t seed, bool count_spill) {
  nlohmann::ordered_json j;
  j["kind"] = "simulation";
  j["arch"] = detail::arch_json(arch);
  j["seed"] = seed;
  j["spill_counted"] = count_spill;
  auto& rows = j["layers"] = nlohmann::ordered_json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& s = recs[i];
    all_ok = all_ok && s.ok(arch.shadow_enabled);
    nlohmann::ordered_json row = {{"index", i},
                                  {"layer", detail::layer_json(s.layer)},
                                  {"ops", count_ops(s.layer)},
                                  {"counters", detail::counters_json(s.counters)},
                                  {"cycles", s.cycles},
                                  {"passes", s.passes},
                                  {"golden_match", s.golden_match},
                                  {"single_fetch", s.single_fetch},
                                  {"rereads", s.rereads},
                                  {"model_match", s.model_match}};
    if (!s.model_error.empty()) row["model_error"] = s.model_error;
    rows.push_back(std::move(row));
  }
  j["ok"] = all_ok;
  return j;
}

inline void write_simulation_csv(std::ostream& os, const std::vector<SimulationRecord>& recs) {
  os << "# trim3d simulation schema v" << kCsvSchemaVersion << '\n';
  os << "index,label,W,H,C,F,K,S,P,ops,ifmap_reads,weight_reads,ofmap_writes,spill_writes,spill_reads,cycles,passes,"
        "golden_match,single_fetch,rereads,model_match\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& s = recs[i];
    const auto& l = s.layer;
    const auto& c = s.counters;
    os << i << ",\"" << l.label() << "\"," << l.ifmap_width << ',' << l.ifmap_height << ',' << l.in_channels << ','
       << l.num_filters << ',' << l.kernel_size << ',' << l.stride << ',' << l.padding << ',' << count_ops(l) << ','
       << c.ifmap_reads << ',' << c.weight_reads << ',' << c.ofmap_writes << ',' << c.psum_spill_writes << ','
       << c.psum_spill_reads << ',' << s.cycles << ',' << s.passes << ',' << s.golden_match << ',' << s.single_fetch
       << ',' << s.rereads << ',' << s.model_match << '\n';
  }
}

// ofmap.bin: "OFMP", then version, H_O, W_O as u32 little-endian, then the
// filters' planes back to back, each row-major int32 little-endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_ofmaps(std::ostream& os, const std::vector<TensorO>& ofmaps) {
  if (ofmaps.empty()) fail(ErrorCode::ShapeMismatch, "no ofmaps to write");
  const int h = ofmaps.front().height();
  const int w = ofmaps.front().width();
  os.write("OFMP", 4);
  detail::put_u32(os, kOfmapVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(h));
  detail::put_u32(os, static_cast<std::uint32_t>(w));
  for (const auto& m : ofmaps) {
    if (m.height() != h || m.width() != w) fail(ErrorCode::ShapeMismatch, "ofmaps differ in shape");
    for (Psum v : m.data()) detail::put_u32(os, static_cast<std::uint32_t>(v));
  }
  if (!os) fail(ErrorCode::IoError, "ofmap write failed");
}

inline std::vector<TensorO> read_ofmaps(std::istream& is) {
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 4, "OFMP") != 0) fail(ErrorCode::IoError, "not an ofmap file");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_u32(p + 4) != kOfmapVersion) fail(ErrorCode::IoError, "unsupported ofmap file version");
  const auto h = detail::get_u32(p + 8);
  const auto w = detail::get_u32(p + 12);
  const std::size_t plane = static_cast<std::size_t>(h) * w * 4;
  const std::size_t body = bytes.size() - 16;
  if (plane == 0 || body % plane != 0) fail(ErrorCode::IoError, "ofmap payload size is not a whole number of planes");
  std::vector<TensorO> out;
  for (std::size_t off = 16; off < bytes.size(); off += plane) {
    TensorO m(static_cast<int>(h), static_cast<int>(w));
    auto d = m.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<Psum>(detail::get_u32(p + off + 4 * i));
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  os << text;
  if (!os) fail(ErrorCode::IoError, "write to " + path + " failed");
}

}  // namespace trim3d
