#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/slice.hpp"

namespace trim3d {

/// Diagonal-path multiplexer setting for one PE row.
enum class DiagPath : std::uint8_t { Idle, Restore, ShiftReg, Shadow };

struct MuxSelect {
  DiagPath path = DiagPath::Idle;
  int shadow_slot = 0;
};

/// Input Recycling Buffer of one core.
///
/// Shift register r holds the exits of PE row r+1 (the ifmap row that PE row r
/// will process on the next window row). Its effective length W - K - 1 is
/// selected at configure time. The (K-1) x (K-1) shadow bank keeps the last
/// K-1 activations of each reused row, which never leave the slice through
/// column 0.
///
/// Per-cycle protocol driven by the control logic:
///   push(exits) -> set_mux / restore_row / emit_diagonal / capture_shadow -> end_cycle()
/// Values pushed in a cycle are visible to pops of the same cycle (input tap);
/// occupancy is checked at end_cycle.
class RecyclingBuffer {
 public:
  RecyclingBuffer(int kernel_hw, int capacity) : k_(kernel_hw), capacity_(capacity) {
    if (kernel_hw < 2) fail(ErrorCode::InvalidArch, "recycling buffer needs K_hw >= 2");
    if (capacity < kernel_hw + 2) fail(ErrorCode::InvalidArch, "buffer capacity below K_hw + 2");
    shift_.resize(static_cast<std::size_t>(k_ - 1));
    pending_.resize(shift_.size());
    mux_.resize(shift_.size());
    shadow_.assign(shift_.size(), std::vector<std::optional<Act>>(shift_.size()));
    max_occupancy_.assign(shift_.size(), 0);
  }

  int kernel_hw() const noexcept { return k_; }
  int physical_length() const noexcept { return capacity_ - k_ - 1; }

  void configure(int ifmap_width) {
    if (ifmap_width > capacity_) {
      fail(ErrorCode::IfmapTooWide, "ifmap width " + std::to_string(ifmap_width) + " exceeds buffer capacity " +
                                        std::to_string(capacity_));
    }
    if (ifmap_width < k_ + 2) {
      fail(ErrorCode::IfmapTooNarrow,
           "ifmap width " + std::to_string(ifmap_width) + " leaves no shift-register stage for K=" + std::to_string(k_));
    }
    width_ = ifmap_width;
    length_ = ifmap_width - k_ - 1;
    reset();
  }

  bool configured() const noexcept { return length_ > 0; }
  int effective_length() const noexcept { return length_; }
  int width() const noexcept { return width_; }

  void set_mode(bool shadow_enabled) {
    if (active_ && shadow_enabled != shadow_enabled_) {
      fail(ErrorCode::ModeChangeMidLayer, "shadow mode can only change between layers");
    }
    shadow_enabled_ = shadow_enabled;
  }
  bool shadow_enabled() const noexcept { return shadow_enabled_; }

  /// exits[r] is the activation leaving column 0 of PE row r+1 this cycle
  /// (nullopt when that row's exit is not kept for reuse).
  void push(std::span<const std::optional<Act>> exits) {
    require_configured();
    if (exits.size() > shift_.size()) fail(ErrorCode::ArityMismatch, "at most K_hw-1 exits per cycle");
    for (std::size_t r = 0; r < exits.size(); ++r) {
      if (!exits[r]) continue;
      pending_[r].push_back(*exits[r]);
      active_ = true;
    }
  }

  void set_mux(int pe_row, MuxSelect select) {
    check_row(pe_row);
    mux_[static_cast<std::size_t>(pe_row)] = select;
  }
  MuxSelect mux(int pe_row) const {
    check_row(pe_row);
    return mux_[static_cast<std::size_t>(pe_row)];
  }

  /// Next reuse activation for the rightmost PE of `pe_row`. Returns nullopt
  /// only on the shadow path with shadow registers disabled: the caller must
  /// then fetch the end-of-row activation from memory.
  std::optional<Act> emit_diagonal(int pe_row) {
    require_configured();
    check_row(pe_row);
    const auto r = static_cast<std::size_t>(pe_row);
    switch (mux_[r].path) {
      case DiagPath::ShiftReg:
        return pop(r);
      case DiagPath::Shadow: {
        if (!shadow_enabled_) return std::nullopt;
        const auto slot = static_cast<std::size_t>(mux_[r].shadow_slot);
        if (slot >= shadow_.size()) fail(ErrorCode::OutOfBounds, "shadow slot out of range");
        auto& cell = shadow_[r][slot];
        if (!cell) {
          fail(ErrorCode::Underflow, "shadow register (" + std::to_string(pe_row) + "," + std::to_string(slot) +
                                         ") read while empty");
        }
        const Act value = *cell;
        cell.reset();
        // The activation moves one bank row up, ready for the next window row.
        if (r > 0) {
          auto& up = shadow_[r - 1][slot];
          if (up) fail(ErrorCode::ShadowOverwrite, "shadow move would overwrite a live register");
          up = value;
        }
        return value;
      }
      case DiagPath::Restore:
      case DiagPath::Idle:
        break;
    }
    fail(ErrorCode::WrongPhase, "PE row " + std::to_string(pe_row) + " diagonal path is not streaming");
  }

  /// K activations for a parallel load of PE row `pe_row` at the start of a window row.
  std::vector<Act> restore_row(int pe_row) {
    require_configured();
    check_row(pe_row);
    const auto r = static_cast<std::size_t>(pe_row);
    if (mux_[r].path != DiagPath::Restore) {
      fail(ErrorCode::WrongPhase, "restore requested for PE row " + std::to_string(pe_row) + " outside a transition");
    }
    std::vector<Act> out;
    out.reserve(static_cast<std::size_t>(k_));
    for (int i = 0; i < k_; ++i) out.push_back(pop(r));
    return out;
  }

  /// Stores an end-of-row activation (tapped from the external port) into the bank.
  void capture_shadow(int shadow_row, int slot, const Act& value) {
    require_configured();
    if (!shadow_enabled_) return;
    check_row(shadow_row);
    if (slot < 0 || slot >= static_cast<int>(shadow_.size())) fail(ErrorCode::OutOfBounds, "shadow slot out of range");
    auto& cell = shadow_[static_cast<std::size_t>(shadow_row)][static_cast<std::size_t>(slot)];
    if (cell) fail(ErrorCode::ShadowOverwrite, "shadow register already holds a live activation");
    cell = value;
    active_ = true;
  }

  /// Whole-bank shift: row r+1 moves to row r, the deepest row is emptied.
  void shadow_shift() {
    for (std::size_t r = 0; r + 1 < shadow_.size(); ++r) shadow_[r] = shadow_[r + 1];
    std::fill(shadow_.back().begin(), shadow_.back().end(), std::nullopt);
  }

  void end_cycle() {
    for (std::size_t r = 0; r < shift_.size(); ++r) {
      for (const auto& v : pending_[r]) shift_[r].push_back(v);
      pending_[r].clear();
      if (static_cast<int>(shift_[r].size()) > length_) {
        fail(ErrorCode::CapacityExceeded, "shift register " + std::to_string(r) + " holds " +
                                              std::to_string(shift_[r].size()) + " > " + std::to_string(length_));
      }
      max_occupancy_[r] = std::max(max_occupancy_[r], shift_[r].size());
      mux_[r] = MuxSelect{};
    }
  }

  /// Empties all registers (end of a pass); configuration and mode stay.
  void reset() {
    for (auto& q : shift_) q.clear();
    for (auto& q : pending_) q.clear();
    for (auto& row : shadow_) std::fill(row.begin(), row.end(), std::nullopt);
    std::fill(mux_.begin(), mux_.end(), MuxSelect{});
    std::fill(max_occupancy_.begin(), max_occupancy_.end(), 0);
    active_ = false;
  }

  /// Oldest first.
  std::vector<Act> shift_contents(int r) const {
    check_row(r);
    const auto& q = shift_[static_cast<std::size_t>(r)];
    return {q.begin(), q.end()};
  }
  std::size_t occupancy(int r) const {
    check_row(r);
    return shift_[static_cast<std::size_t>(r)].size();
  }
  std::size_t max_occupancy(int r) const {
    check_row(r);
    return max_occupancy_[static_cast<std::size_t>(r)];
  }
  const std::vector<std::optional<Act>>& shadow_row(int r) const {
    check_row(r);
    return shadow_[static_cast<std::size_t>(r)];
  }
  std::size_t shadow_live() const {
    std::size_t n = 0;
    for (const auto& row : shadow_) n += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](const auto& v) {
      return v.has_value();
    }));
    return n;
  }
  bool empty() const {
    return std::all_of(shift_.begin(), shift_.end(), [](const auto& q) { return q.empty(); }) && shadow_live() == 0;
  }

 private:
  Act pop(std::size_t r) {
    if (!shift_[r].empty()) {
      const Act v = shift_[r].front();
      shift_[r].pop_front();
      return v;
    }
    if (!pending_[r].empty()) {
      const Act v = pending_[r].front();
      pending_[r].erase(pending_[r].begin());
      return v;
    }
    fail(ErrorCode::Underflow, "shift register " + std::to_string(r) + " read while empty");
  }
  void require_configured() const {
    if (!configured()) fail(ErrorCode::NotConfigured, "recycling buffer used before configure()");
  }
  void check_row(int r) const {
    if (r < 0 || r >= static_cast<int>(shift_.size())) {
      fail(ErrorCode::OutOfBounds, "IRB row " + std::to_string(r) + " outside 0.." + std::to_string(shift_.size() - 1));
    }
  }

  int k_;
  int capacity_;
  int width_ = 0;
  int length_ = 0;
  bool shadow_enabled_ = true;
  bool active_ = false;
  std::vector<std::deque<Act>> shift_;
  std::vector<std::vector<Act>> pending_;
  std::vector<MuxSelect> mux_;
  std::vector<std::vector<std::optional<Act>>> shadow_;
  std::vector<std::size_t> max_occupancy_;
};

}  // namespace trim3d
