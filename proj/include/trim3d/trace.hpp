#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/slice.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

enum class Phase : std::uint8_t { Idle, WeightLoad, Fill, Steady, RowTransition, Drain };

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::WeightLoad: return "WeightLoad";
    case Phase::Fill: return "Fill";
    case Phase::Steady: return "Steady";
    case Phase::RowTransition: return "RowTransition";
    case Phase::Drain: return "Drain";
  }
  return "?";
}

/// WeightLoad -> Fill -> (Steady <-> RowTransition) -> Drain -> Idle. A pass
/// may skip the streaming group (single window row), and a new pass may start
/// straight after Drain.
constexpr bool legal_transition(Phase from, Phase to) {
  if (from == to) return true;
  switch (from) {
    case Phase::Idle: return to == Phase::WeightLoad;
    case Phase::WeightLoad: return to == Phase::Fill;
    case Phase::Fill: return to == Phase::Steady || to == Phase::RowTransition || to == Phase::Drain;
    case Phase::Steady: return to == Phase::RowTransition || to == Phase::Drain;
    case Phase::RowTransition: return to == Phase::Steady || to == Phase::Drain;
    case Phase::Drain: return to == Phase::Idle || to == Phase::WeightLoad;
  }
  return false;
}

struct PhaseState {
  Phase phase = Phase::Idle;
  std::uint64_t cycle_in_phase = 0;
};

struct ShadowCapture {
  int core = 0;
  int row = 0;  // ifmap-window coordinates of the captured activation
  int col = 0;
  int bank_row = 0;
  int slot = 0;
};

/// What happened in one global cycle. Per-core vectors are indexed by core,
/// slice_commits by core * P_O + slice.
struct CycleEvents {
  std::uint64_t cycle = 0;
  int pass = 0;
  int local_cycle = 0;
  Phase phase = Phase::Idle;
  std::vector<int> ext_fetches;
  std::vector<int> refetches;
  int restores = 0;
  int diag_shift_feeds = 0;
  int diag_shadow_feeds = 0;
  int shadow_moves = 0;
  std::vector<ShadowCapture> shadow_captures;
  std::vector<int> slice_commits;
  std::vector<int> lane_commits;
};

struct TraceCell {
  std::optional<Act> act;
  Source source = Source::None;
};

struct CoreSnapshot {
  std::vector<TraceCell> grid;  // K x K, slice 0 (all slices of a core hold the same activations)
  std::vector<std::vector<Act>> shift_regs;
  std::vector<std::vector<std::optional<Act>>> shadow;
};

struct CycleRecord {
  std::uint64_t cycle = 0;
  int pass = 0;
  int local_cycle = 0;
  Phase phase = Phase::Idle;
  std::vector<CoreSnapshot> cores;
  CycleEvents events;
};

/// Schedule constants of a run. Reference cycle numbering (the first window of
/// PE row 0 on cycle 1) is local_cycle - reference_offset.
struct TraceHeader {
  ArchConfig arch;
  LayerConfig layer;
  int weight_load_cycles = 0;
  int first_activation_cycle = 0;
  int window_width = 0;       // columns streamed per window row (padded and extended)
  int extension_windows = 0;  // discarded windows per row when the width is extended
  int irb_length = 0;
  int commit_latency = 0;     // cycles from PE row 0 activation to committed output
  int transition_stall_cycles = 0;
  int reference_offset = 0;
  std::uint64_t total_cycles = 0;
};

struct SimTrace {
  TraceHeader header;
  std::uint64_t first_cycle = 0;  // recorded window [first_cycle, first_cycle + records.size())
  std::vector<CycleRecord> records;
};

namespace detail {

inline void put_act(std::ostream& os, const std::optional<Act>& a, Source s, bool tagged) {
  std::ostringstream cell;
  if (a) {
    cell << static_cast<int>(a->value);
  } else {
    cell << 'X';
  }
  if (tagged) cell << (a ? source_tag(s) : ' ');
  os << std::setw(6) << cell.str();
}

}  // namespace detail

inline void write_trace_header(std::ostream& os, const TraceHeader& h) {
  const auto& a = h.arch;
  const auto& l = h.layer;
  os << "# trim3d trace v1\n";
  os << "# arch P_I=" << a.cores << " P_O=" << a.slices_per_core << " K_hw=" << a.kernel_hw
     << " shadow=" << (a.shadow_enabled ? "on" : "off") << '\n';
  os << "# layer W=" << l.ifmap_width << " H=" << l.ifmap_height << " C=" << l.in_channels << " F=" << l.num_filters
     << " K=" << l.kernel_size << " S=" << l.stride << " P=" << l.padding << '\n';
  os << "# schedule weight_load=" << h.weight_load_cycles << " first_activation=" << h.first_activation_cycle
     << " window_width=" << h.window_width << " extension_windows=" << h.extension_windows
     << " irb_length=" << h.irb_length << " commit_latency=" << h.commit_latency
     << " transition_stall=" << h.transition_stall_cycles << " total_cycles=" << h.total_cycles << '\n';
  os << "# reference_cycle = local_cycle - " << h.reference_offset << '\n';
  os << "# tags: e=external h=horizontal d=diagonal(shift register) s=diagonal(shadow) X=undefined\n";
}

/// Fixed-width per-cycle dump of cycles [first, last). Byte-stable for equal traces.
inline std::string dump_trace(const SimTrace& trace, std::uint64_t first, std::uint64_t last) {
  if (first > last) fail(ErrorCode::RangeError, "trace window start after end");
  const std::uint64_t rec_end = trace.first_cycle + trace.records.size();
  if (first != last && (first < trace.first_cycle || last > rec_end)) {
    fail(ErrorCode::RangeError, "cycles [" + std::to_string(first) + "," + std::to_string(last) +
                                    ") not recorded (have [" + std::to_string(trace.first_cycle) + "," +
                                    std::to_string(rec_end) + "))");
  }
  std::ostringstream os;
  write_trace_header(os, trace.header);
  for (std::uint64_t cyc = first; cyc < last; ++cyc) {
    const auto& rec = trace.records[static_cast<std::size_t>(cyc - trace.first_cycle)];
    os << "cycle " << rec.cycle << " pass " << rec.pass << " local " << rec.local_cycle << " ref "
       << (rec.local_cycle - trace.header.reference_offset) << " phase " << to_string(rec.phase) << '\n';
    for (std::size_t core = 0; core < rec.cores.size(); ++core) {
      const auto& snap = rec.cores[core];
      const int k = trace.header.arch.kernel_hw;
      os << " core " << core << '\n';
      for (int r = 0; r < k; ++r) {
        os << "  pe row " << r << "   |";
        for (int c = 0; c < k; ++c) {
          const auto& cell = snap.grid[static_cast<std::size_t>(r * k + c)];
          detail::put_act(os, cell.act, cell.source, true);
        }
        os << '\n';
      }
      for (std::size_t r = 0; r < snap.shift_regs.size(); ++r) {
        os << "  shift reg " << r << " |";
        for (const auto& a : snap.shift_regs[r]) detail::put_act(os, a, Source::None, false);
        os << '\n';
      }
      for (std::size_t r = 0; r < snap.shadow.size(); ++r) {
        os << "  shadow " << r << "    |";
        for (const auto& a : snap.shadow[r]) detail::put_act(os, a, Source::None, false);
        os << '\n';
      }
      const auto& ev = rec.events;
      const auto ci = core;
      os << "  events      | ext=" << (ci < ev.ext_fetches.size() ? ev.ext_fetches[ci] : 0)
         << " refetch=" << (ci < ev.refetches.size() ? ev.refetches[ci] : 0) << '\n';
    }
    const auto& ev = rec.events;
    int lanes = 0;
    for (int v : ev.lane_commits) lanes += v;
    os << " array events | restores=" << ev.restores << " diag_shift=" << ev.diag_shift_feeds
       << " diag_shadow=" << ev.diag_shadow_feeds << " shadow_capture=" << ev.shadow_captures.size()
       << " shadow_move=" << ev.shadow_moves << " commits=" << lanes << '\n';
  }
  return os.str();
}

inline std::string dump_trace(const SimTrace& trace) {
  return dump_trace(trace, trace.first_cycle, trace.first_cycle + trace.records.size());
}

}  // namespace trim3d
