#pragma once

// Top-level machine: P_I cores of P_O slices, one recycling buffer per core,
// P_O cross-core adder trees, and the static control schedule.
//
// Schedule of one pass (K = K_hw, local cycle t):
//   t in [0, K)            weight load, bottom kernel row first
//   t = K + s + r          PE row r holds window slot s (slot = y * windows_per_row + x)
//   t = 2K + 1 + s         the window of slot s is committed by the cross trees
//
// Window row 0 is fetched from memory on every PE row. Afterwards only the
// bottom row reads memory; upper rows get their first K activations by a
// parallel restore from the shift register, the middle of the row diagonally
// from the shift register, and the last K-1 (end of row) from the shadow bank.
// Rows are at least 2K columns wide; narrower windows are extended with zero
// columns whose windows are discarded.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/memory.hpp"
#include "trim3d/recycling_buffer.hpp"
#include "trim3d/slice.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/trace.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

/// Static stream geometry shared by every pass of a layer.
struct PassGeometry {
  int kernel_hw = 0;
  int out_height = 0;
  int out_width = 0;
  int window_width = 0;     // streamed columns per ifmap row
  int windows_per_row = 0;  // window_width - K + 1, includes discarded extension windows
  int sub_height = 0;       // streamed ifmap rows
  int slots = 0;            // out_height * windows_per_row
  int pass_cycles = 0;      // weight load + skewed stream + multiply/accumulate drain
};

inline PassGeometry pass_geometry(const LayerConfig& layer, int kernel_hw) {
  PassGeometry g;
  g.kernel_hw = kernel_hw;
  g.out_height = layer.out_height;
  g.out_width = layer.out_width;
  g.window_width = std::max(layer.out_width + kernel_hw - 1, 2 * kernel_hw);
  g.windows_per_row = g.window_width - kernel_hw + 1;
  g.sub_height = layer.out_height + kernel_hw - 1;
  g.slots = g.out_height * g.windows_per_row;
  g.pass_cycles = g.slots + 2 * kernel_hw + 1;
  return g;
}

/// Sum of one lane over all active cores.
inline Psum cross_accumulate(std::span<const std::optional<Psum>> lane) {
  Psum sum = 0;
  std::size_t valid = 0;
  for (const auto& v : lane) {
    if (v) {
      sum += *v;
      ++valid;
    }
  }
  if (valid != lane.size()) {
    fail(ErrorCode::LaneDesync, std::to_string(valid) + " of " + std::to_string(lane.size()) +
                                    " cores delivered a psum in the same cycle");
  }
  return sum;
}

/// Half-open range of global cycles.
struct CycleWindow {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

struct RunOptions {
  bool record_events = false;
  std::optional<CycleWindow> trace_window;
  bool check_invariants = true;  // activation provenance and slice broadcast, every cycle
  bool count_spill = true;
};

struct LayerResult {
  std::vector<TensorO> ofmaps;
  AccessCounters counters;
  std::uint64_t cycles = 0;
  PassGeometry geometry;
  SimTrace trace;
  std::vector<CycleEvents> events;
  std::vector<ReadAudit> audits;
};

class ArrayOrchestrator {
 public:
  explicit ArrayOrchestrator(ArchConfig arch) : arch_(arch) {
    arch_.validate();
    for (int i = 0; i < arch_.cores; ++i) {
      irbs_.emplace_back(arch_.kernel_hw, arch_.buffer_capacity);
      for (int j = 0; j < arch_.slices_per_core; ++j) slices_.emplace_back(arch_.kernel_hw);
    }
    inputs_.assign(static_cast<std::size_t>(arch_.cores), SliceInputs(arch_.kernel_hw));
  }

  const ArchConfig& arch() const noexcept { return arch_; }
  int pe_count() const noexcept { return static_cast<int>(slices_.size()) * arch_.kernel_hw * arch_.kernel_hw; }
  int irb_count() const noexcept { return static_cast<int>(irbs_.size()); }
  int cross_tree_count() const noexcept { return arch_.slices_per_core; }
  int cross_tree_arity() const noexcept { return arch_.cores; }

  PhaseState phase() const noexcept { return phase_; }
  std::uint64_t cycle() const noexcept { return cycle_; }
  bool running() const noexcept { return running_; }

  const SliceEngine& slice(int core, int j) const { return slices_.at(slice_index(core, j)); }
  const RecyclingBuffer& irb(int core) const { return irbs_.at(static_cast<std::size_t>(core)); }
  const MemoryImage& memory() const {
    if (!memory_) fail(ErrorCode::NotConfigured, "no layer loaded");
    return *memory_;
  }
  const PassGeometry& geometry() const noexcept { return geo_; }

  void begin_layer(const LayerConfig& layer, std::vector<TensorI> ifmaps, FilterBank filters, const TilingPlan& plan,
                   RunOptions options = {}) {
    if (running_) fail(ErrorCode::BusyError, "a layer is already in progress");
    if (layer.stride != 1 || plan.target != PlanTarget::Simulator) {
      fail(ErrorCode::UnsupportedStrideForSim, "the simulator requires a stride-1 simulator plan");
    }
    if (plan.kernel_size != layer.kernel_size || plan.kernel_hw != arch_.kernel_hw ||
        plan.in_channels != layer.in_channels || plan.num_filters != layer.num_filters ||
        plan.cores != arch_.cores || plan.slices_per_core != arch_.slices_per_core) {
      fail(ErrorCode::PlanMismatch, "tiling plan was built for a different layer or architecture");
    }
    layer_ = layer;
    plan_ = plan;
    options_ = std::move(options);
    geo_ = pass_geometry(layer, arch_.kernel_hw);
    if (geo_.window_width > arch_.buffer_capacity) {
      fail(ErrorCode::IfmapTooWide, "streamed row width " + std::to_string(geo_.window_width) +
                                        " exceeds buffer capacity " + std::to_string(arch_.buffer_capacity));
    }
    memory_.emplace(layer, std::move(ifmaps), std::move(filters), arch_.kernel_hw, options_.count_spill);
    for (auto& irb : irbs_) {
      irb.reset();
      irb.configure(geo_.window_width);
      irb.set_mode(arch_.shadow_enabled);
    }
    for (auto& s : slices_) s.end_stream();

    result_ = LayerResult{};
    result_.geometry = geo_;
    auto& h = result_.trace.header;
    h.arch = arch_;
    h.layer = layer;
    h.weight_load_cycles = arch_.kernel_hw;
    h.first_activation_cycle = arch_.kernel_hw;
    h.window_width = geo_.window_width;
    h.extension_windows = geo_.windows_per_row - geo_.out_width;
    h.irb_length = geo_.window_width - arch_.kernel_hw - 1;
    h.commit_latency = arch_.kernel_hw + 1;
    h.transition_stall_cycles = 0;
    h.reference_offset = arch_.kernel_hw - 1;
    if (options_.trace_window) result_.trace.first_cycle = options_.trace_window->first;

    pass_ = 0;
    local_ = 0;
    layer_start_cycle_ = cycle_;
    running_ = plan_.passes > 0;
  }

  CycleEvents step_cycle() {
    if (!running_) fail(ErrorCode::WrongPhase, "no layer in progress");
    const auto& pass = plan_.schedule[static_cast<std::size_t>(pass_)];
    if (local_ == 0) start_pass(pass);

    CycleEvents ev;
    ev.cycle = cycle_;
    ev.pass = pass_;
    ev.local_cycle = local_;
    ev.ext_fetches.assign(static_cast<std::size_t>(arch_.cores), 0);
    ev.refetches.assign(static_cast<std::size_t>(arch_.cores), 0);
    ev.slice_commits.assign(slices_.size(), 0);
    ev.lane_commits.assign(static_cast<std::size_t>(arch_.slices_per_core), 0);
    ev.phase = phase_at(local_);

    const int k = arch_.kernel_hw;
    if (local_ < k) {
      load_weight_row(pass, local_);
    } else {
      stream_cycle(pass, ev);
    }

    if (ev.phase == phase_.phase) {
      ++phase_.cycle_in_phase;
    } else {
      if (!legal_transition(phase_.phase, ev.phase)) {
        fail(ErrorCode::ScheduleViolation, std::string("illegal phase transition ") +
                                               std::string(to_string(phase_.phase)) + " -> " +
                                               std::string(to_string(ev.phase)));
      }
      phase_ = {ev.phase, 1};
    }

    record(pass, ev);
    ++cycle_;
    ++local_;
    if (local_ == geo_.pass_cycles) finish_pass(pass);
    return ev;
  }

  LayerResult finish() {
    if (running_) fail(ErrorCode::WrongPhase, "layer still in progress");
    if (!memory_) fail(ErrorCode::NotConfigured, "no layer loaded");
    result_.ofmaps = memory_->outputs();
    result_.counters = memory_->snapshot_counters();
    result_.cycles = cycle_ - layer_start_cycle_;
    result_.trace.header.total_cycles = result_.cycles;
    return std::move(result_);
  }

  LayerResult run_layer(const LayerConfig& layer, std::vector<TensorI> ifmaps, FilterBank filters,
                        const TilingPlan& plan, RunOptions options = {}) {
    begin_layer(layer, std::move(ifmaps), std::move(filters), plan, std::move(options));
    while (running_) {
      auto ev = step_cycle();
      if (options_.record_events) result_.events.push_back(std::move(ev));
    }
    return finish();
  }

 private:
  std::size_t slice_index(int core, int j) const {
    if (core < 0 || j < 0 || core >= arch_.cores || j >= arch_.slices_per_core) {
      fail(ErrorCode::OutOfBounds, "slice (" + std::to_string(core) + "," + std::to_string(j) + ") outside array");
    }
    return static_cast<std::size_t>(core * arch_.slices_per_core + j);
  }
  SliceEngine& slice_mut(int core, int j) { return slices_[slice_index(core, j)]; }

  struct Slot {
    bool valid = false;
    int y = 0;
    int x = 0;
  };
  Slot slot_of_row(int local, int row) const {
    const int s = local - arch_.kernel_hw - row;
    if (s < 0 || s >= geo_.slots) return {};
    return {true, s / geo_.windows_per_row, s % geo_.windows_per_row};
  }
  Slot commit_slot(int local) const {
    const int s = local - 2 * arch_.kernel_hw - 1;
    if (s < 0 || s >= geo_.slots) return {};
    return {true, s / geo_.windows_per_row, s % geo_.windows_per_row};
  }

  Phase phase_at(int local) const {
    const int k = arch_.kernel_hw;
    if (local < k) return Phase::WeightLoad;
    const int top = local - k;
    const int bottom = local - k - (k - 1);
    if (top >= geo_.slots) return Phase::Drain;
    if (bottom < geo_.windows_per_row) return Phase::Fill;
    for (int r = 0; r < k; ++r) {
      const auto s = slot_of_row(local, r);
      if (s.valid && (s.x == 0 || s.x >= geo_.out_width)) return Phase::RowTransition;
    }
    const auto c = commit_slot(local);
    if (c.valid && c.x >= geo_.out_width) return Phase::RowTransition;
    return Phase::Steady;
  }

  void start_pass(const PassPlan& pass) {
    memory_->begin_pass(pass_);
    for (std::size_t i = 0; i < pass.units.size(); ++i) {
      const auto& unit = pass.units[i];
      const auto off = plan_.sub_kernel_map[static_cast<std::size_t>(unit.tile)];
      memory_->expect_region(static_cast<int>(i), unit.channel, off.row_offset, geo_.sub_height, off.col_offset,
                             geo_.window_width);
    }
  }

  void finish_pass(const PassPlan& pass) {
    for (std::size_t i = 0; i < pass.units.size(); ++i) {
      auto& irb = irbs_[i];
      for (int r = 0; r < arch_.kernel_hw - 1; ++r) {
        if (irb.occupancy(r) != 0) {
          fail(ErrorCode::ScheduleViolation, "shift register " + std::to_string(r) + " of core " + std::to_string(i) +
                                                 " still holds activations at the end of a pass");
        }
      }
      irb.reset();
      for (int j = 0; j < arch_.slices_per_core; ++j) slice_mut(static_cast<int>(i), j).end_stream();
    }
    result_.audits.push_back(memory_->end_pass());
    local_ = 0;
    ++pass_;
    if (pass_ == plan_.passes) {
      running_ = false;
      phase_ = {Phase::Idle, 0};
    }
  }

  void load_weight_row(const PassPlan& pass, int local) {
    const int k = arch_.kernel_hw;
    const int kr = k - 1 - local;
    std::vector<Weight> row(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pass.units.size(); ++i) {
      const auto& unit = pass.units[i];
      for (int j = 0; j < pass.filter_count; ++j) {
        for (int c = 0; c < k; ++c) {
          row[static_cast<std::size_t>(c)] = memory_->read_weight(pass.filter_base + j, unit.channel, unit.tile, kr, c);
        }
        slice_mut(static_cast<int>(i), j).shift_weights_in(row);
      }
    }
  }

  Act fetch(int core, const WorkUnit& unit, int row, int col) {
    const auto off = plan_.sub_kernel_map[static_cast<std::size_t>(unit.tile)];
    const int pr = off.row_offset + row;
    const int pc = off.col_offset + col;
    Activation v = 0;
    if (pr < layer_.padded_height() && pc < layer_.padded_width()) {
      v = memory_->read_activation(unit.channel, pr, pc, core);
    }
    return {v, row, col};
  }

  void stream_cycle(const PassPlan& pass, CycleEvents& ev) {
    const int k = arch_.kernel_hw;
    const int wo = geo_.windows_per_row;
    const int last_y = geo_.out_height - 1;
    std::vector<std::optional<Act>> exits(static_cast<std::size_t>(k - 1));

    for (std::size_t ci = 0; ci < pass.units.size(); ++ci) {
      const int core = static_cast<int>(ci);
      const auto& unit = pass.units[ci];
      auto& irb = irbs_[ci];
      auto& in = inputs_[ci];
      in.clear();

      // Exits of PE rows 1..K-1 leave column 0 now; keep those whose row is reused.
      const SliceEngine& lead = slice(core, 0);
      for (int r = 0; r + 1 < k; ++r) {
        const auto prev = slot_of_row(local_ - 1, r + 1);
        const auto& a = lead.pe(r + 1, 0).act_reg;
        exits[static_cast<std::size_t>(r)] = (prev.valid && prev.y < last_y && a) ? a : std::nullopt;
      }
      irb.push(exits);

      for (int r = 0; r < k; ++r) {
        const auto s = slot_of_row(local_, r);
        if (!s.valid) continue;
        const bool from_memory = s.y == 0 || r == k - 1;
        const int row = s.y + r;
        auto sel = [&](int c) -> Source& { return in.select[static_cast<std::size_t>(r * k + c)]; };
        auto ext = [&](int c) -> std::optional<Act>& { return in.ext[static_cast<std::size_t>(r * k + c)]; };

        if (s.x == 0) {
          if (from_memory) {
            for (int c = 0; c < k; ++c) {
              sel(c) = Source::External;
              ext(c) = fetch(core, unit, row, c);
              ++ev.ext_fetches[ci];
            }
          } else {
            if (in.restore) fail(ErrorCode::ScheduleViolation, "two row restores in one cycle");
            irb.set_mux(r, {DiagPath::Restore, 0});
            in.restore = RowRestore{r, irb.restore_row(r)};
            for (int c = 0; c < k; ++c) sel(c) = Source::DiagonalShift;
            ++ev.restores;
          }
          continue;
        }

        for (int c = 0; c + 1 < k; ++c) sel(c) = Source::Horizontal;
        const int col = s.x + k - 1;
        const int edge = k - 1;
        if (from_memory) {
          sel(edge) = Source::External;
          ext(edge) = fetch(core, unit, row, col);
          ++ev.ext_fetches[ci];
          if (r >= 1 && col >= wo && s.y < last_y && irb.shadow_enabled()) {
            irb.capture_shadow(r - 1, col - wo, *ext(edge));
            ev.shadow_captures.push_back({core, row, col, r - 1, col - wo});
          }
        } else if (col < wo) {
          irb.set_mux(r, {DiagPath::ShiftReg, 0});
          sel(edge) = Source::DiagonalShift;
          in.diag[static_cast<std::size_t>(r)] = irb.emit_diagonal(r);
          ++ev.diag_shift_feeds;
        } else {
          irb.set_mux(r, {DiagPath::Shadow, col - wo});
          if (auto v = irb.emit_diagonal(r)) {
            sel(edge) = Source::DiagonalShadow;
            in.diag[static_cast<std::size_t>(r)] = v;
            ++ev.diag_shadow_feeds;
            if (r > 0) ++ev.shadow_moves;
          } else {
            sel(edge) = Source::External;
            ext(edge) = fetch(core, unit, row, col);
            ++ev.ext_fetches[ci];
            ++ev.refetches[ci];
          }
        }
      }
      irb.end_cycle();

      for (int j = 0; j < pass.filter_count; ++j) slice_mut(core, j).step(in);
      if (options_.check_invariants) check_core(core, unit, pass);
    }

    commit(pass, ev);
  }

  void check_core(int core, const WorkUnit& unit, const PassPlan& pass) const {
    const int k = arch_.kernel_hw;
    const auto off = plan_.sub_kernel_map[static_cast<std::size_t>(unit.tile)];
    const SliceEngine& lead = slice(core, 0);
    for (int r = 0; r < k; ++r) {
      const auto s = slot_of_row(local_, r);
      for (int c = 0; c < k; ++c) {
        const auto& a = lead.pe(r, c).act_reg;
        if (!s.valid) continue;
        const int row = s.y + r;
        const int col = s.x + c;
        const Activation want = memory_->peek_activation(unit.channel, off.row_offset + row, off.col_offset + col);
        if (!a || a->row != row || a->col != col || a->value != want) {
          fail(ErrorCode::ScheduleViolation, "core " + std::to_string(core) + " PE (" + std::to_string(r) + "," +
                                                 std::to_string(c) + ") does not hold window activation (" +
                                                 std::to_string(row) + "," + std::to_string(col) + ")");
        }
      }
    }
    for (int j = 1; j < pass.filter_count; ++j) {
      const SliceEngine& other = slice(core, j);
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
          if (other.pe(r, c).act_reg != lead.pe(r, c).act_reg) {
            fail(ErrorCode::ScheduleViolation, "slices of core " + std::to_string(core) + " diverged");
          }
        }
      }
    }
  }

  void commit(const PassPlan& pass, CycleEvents& ev) {
    const auto s = commit_slot(local_);
    if (!s.valid || s.x >= geo_.out_width) return;
    const auto cores = pass.units.size();
    std::vector<std::optional<Psum>> lane(cores);
    for (int j = 0; j < pass.filter_count; ++j) {
      for (std::size_t i = 0; i < cores; ++i) {
        lane[i] = slice(static_cast<int>(i), j).tree_out();
        if (lane[i]) ev.slice_commits[slice_index(static_cast<int>(i), j)] = 1;
      }
      if (std::none_of(lane.begin(), lane.end(), [](const auto& v) { return v.has_value(); })) {
        fail(ErrorCode::ScheduleViolation, "no psum reached the cross tree at its commit cycle");
      }
      Psum v = cross_accumulate(lane);
      ev.lane_commits[static_cast<std::size_t>(j)] = 1;

      const int f = pass.filter_base + j;
      const int groups = plan_.unit_groups;
      const int g = pass.unit_group;
      if (groups == 1) {
        memory_->write_output(f, s.y, s.x, v);
      } else if (g == 0) {
        memory_->write_psum_spill(f, s.y, s.x, v);
      } else {
        v += memory_->read_psum_spill(f, s.y, s.x);
        if (g == groups - 1) {
          memory_->write_output(f, s.y, s.x, v);
        } else {
          memory_->write_psum_spill(f, s.y, s.x, v);
        }
      }
    }
  }

  void record(const PassPlan& pass, const CycleEvents& ev) {
    if (!options_.trace_window) return;
    const auto& w = *options_.trace_window;
    if (cycle_ < w.first || cycle_ >= w.last) return;
    const int k = arch_.kernel_hw;
    CycleRecord rec;
    rec.cycle = cycle_;
    rec.pass = pass_;
    rec.local_cycle = local_;
    rec.phase = ev.phase;
    rec.events = ev;
    for (int core = 0; core < arch_.cores; ++core) {
      CoreSnapshot snap;
      snap.grid.resize(static_cast<std::size_t>(k * k));
      const bool active = static_cast<std::size_t>(core) < pass.units.size();
      if (active) {
        const SliceEngine& lead = slice(core, 0);
        for (int r = 0; r < k; ++r) {
          for (int c = 0; c < k; ++c) {
            const auto& pe = lead.pe(r, c);
            snap.grid[static_cast<std::size_t>(r * k + c)] = {pe.act_reg, pe.src_select};
          }
        }
      }
      const auto& irb = irbs_[static_cast<std::size_t>(core)];
      for (int r = 0; r < k - 1; ++r) {
        snap.shift_regs.push_back(active ? irb.shift_contents(r) : std::vector<Act>{});
        snap.shadow.push_back(irb.shadow_row(r));
      }
      rec.cores.push_back(std::move(snap));
    }
    result_.trace.records.push_back(std::move(rec));
  }

  ArchConfig arch_;
  std::vector<SliceEngine> slices_;
  std::vector<RecyclingBuffer> irbs_;
  std::vector<SliceInputs> inputs_;

  LayerConfig layer_;
  TilingPlan plan_;
  RunOptions options_;
  PassGeometry geo_;
  std::optional<MemoryImage> memory_;
  LayerResult result_;

  PhaseState phase_;
  std::uint64_t cycle_ = 0;
  std::uint64_t layer_start_cycle_ = 0;
  int pass_ = 0;
  int local_ = 0;
  bool running_ = false;
};

/// Plans, builds and runs one layer on a fresh array.
inline LayerResult simulate_layer(const ArchConfig& arch, const LayerConfig& layer, std::vector<TensorI> ifmaps,
                                  FilterBank filters, RunOptions options = {}) {
  ArrayOrchestrator array(arch);
  const auto plan = plan_tiling(layer, arch, PlanTarget::Simulator);
  return array.run_layer(layer, std::move(ifmaps), std::move(filters), plan, std::move(options));
}

}  // namespace trim3d
