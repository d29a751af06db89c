#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"

namespace trim3d {

/// An activation travelling through the array. The origin coordinates are
/// simulation metadata (position in the core's ifmap window), used for
/// provenance checks and traces; hardware carries only the value.
struct Act {
  Activation value = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const Act&, const Act&) = default;
};

/// Where a PE's activation register is loaded from in a given cycle.
enum class Source : std::uint8_t {
  None,            // register left undefined
  External,        // vertical port from memory
  Horizontal,      // right-hand neighbour
  DiagonalShift,   // recycling buffer, shift-register path
  DiagonalShadow,  // recycling buffer, shadow-register path
};

constexpr char source_tag(Source s) {
  switch (s) {
    case Source::External: return 'e';
    case Source::Horizontal: return 'h';
    case Source::DiagonalShift: return 'd';
    case Source::DiagonalShadow: return 's';
    case Source::None: break;
  }
  return '-';
}

constexpr bool is_diagonal(Source s) { return s == Source::DiagonalShift || s == Source::DiagonalShadow; }

struct PEState {
  std::optional<Act> act_reg;
  Weight weight_reg = 0;
  std::optional<Psum> prod_reg;
  std::optional<Psum> psum_reg;
  std::optional<Act> pass_left_reg;
  Source src_select = Source::None;
};

/// Parallel load of one whole PE row from the recycling buffer.
struct RowRestore {
  int row = 0;
  std::vector<Act> values;
};

/// Everything the control logic and the buffers present to a slice in one cycle.
/// `select`, `ext` are K x K row-major; `diag` has one entry per PE row and
/// feeds that row's rightmost PE.
struct SliceInputs {
  std::vector<Source> select;
  std::vector<std::optional<Act>> ext;
  std::vector<std::optional<Act>> diag;
  std::optional<RowRestore> restore;

  explicit SliceInputs(int k = 0)
      : select(static_cast<std::size_t>(k * k), Source::None), ext(static_cast<std::size_t>(k * k)),
        diag(static_cast<std::size_t>(k)) {}

  void clear() {
    std::fill(select.begin(), select.end(), Source::None);
    std::fill(ext.begin(), ext.end(), std::nullopt);
    std::fill(diag.begin(), diag.end(), std::nullopt);
    restore.reset();
  }
};

struct SliceStepOutput {
  std::optional<Psum> tree_out;
  std::span<const std::optional<Act>> leftmost_exits;  // valid until the next step
};

/// Balanced pairwise reduction, left operand first at every level.
inline Psum adder_tree_sum(std::span<const Psum> values, std::size_t arity) {
  if (values.size() != arity) {
    fail(ErrorCode::ArityMismatch, "adder tree expects " + std::to_string(arity) + " operands, got " +
                                       std::to_string(values.size()));
  }
  std::vector<Psum> level(values.begin(), values.end());
  while (level.size() > 1) {
    std::vector<Psum> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(level[i] + level[i + 1]);
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level.empty() ? 0 : level.front();
}

/// One K x K slice: stationary weights, right-to-left activation movement,
/// top-to-bottom psums (multiply stage, then accumulate stage) and the slice
/// adder tree over the bottom row.
class SliceEngine {
 public:
  explicit SliceEngine(int k) : k_(k), grid_(static_cast<std::size_t>(k * k)), next_(grid_.size()) {
    if (k < 1) fail(ErrorCode::InvalidArch, "slice size must be positive");
    exits_.resize(static_cast<std::size_t>(k));
    bottom_.resize(static_cast<std::size_t>(k));
  }

  int size() const noexcept { return k_; }
  bool busy() const noexcept { return busy_; }

  /// One weight-load cycle: rows shift down by one, `top_row` enters row 0.
  void shift_weights_in(std::span<const Weight> top_row) {
    if (busy_) fail(ErrorCode::BusyError, "weights cannot change while a layer is streaming");
    if (static_cast<int>(top_row.size()) != k_) fail(ErrorCode::ArityMismatch, "weight row width mismatch");
    for (int r = k_ - 1; r > 0; --r)
      for (int c = 0; c < k_; ++c) at(grid_, r, c).weight_reg = at(grid_, r - 1, c).weight_reg;
    for (int c = 0; c < k_; ++c) at(grid_, 0, c).weight_reg = top_row[static_cast<std::size_t>(c)];
  }

  /// Full load: K cycles, bottom kernel row first so that row r settles in PE row r.
  int load_weights(const TensorW& kernel) {
    if (kernel.height() != k_ || kernel.width() != k_) fail(ErrorCode::ShapeMismatch, "kernel must be K_hw x K_hw");
    std::vector<Weight> row(static_cast<std::size_t>(k_));
    for (int step = 0; step < k_; ++step) {
      const int kr = k_ - 1 - step;
      for (int c = 0; c < k_; ++c) row[static_cast<std::size_t>(c)] = kernel(kr, c);
      shift_weights_in(row);
    }
    return k_;
  }

  SliceStepOutput step(const SliceInputs& in) {
    const auto kk = static_cast<std::size_t>(k_ * k_);
    if (in.select.size() != kk || in.ext.size() != kk || in.diag.size() != static_cast<std::size_t>(k_)) {
      fail(ErrorCode::ArityMismatch, "slice inputs sized for a different K");
    }
    if (in.restore && (in.restore->row < 0 || in.restore->row >= k_ ||
                       in.restore->values.size() != static_cast<std::size_t>(k_))) {
      fail(ErrorCode::ArityMismatch, "row restore must carry K values for a valid row");
    }
    for (int r = 0; r < k_; ++r) {
      for (int c = 0; c < k_; ++c) {
        const PEState& cur = at(grid_, r, c);
        PEState& nxt = at(next_, r, c);
        const Source sel = in.select[idx(r, c)];
        if (sel != Source::None) busy_ = true;
        nxt.src_select = sel;
        nxt.weight_reg = cur.weight_reg;
        nxt.pass_left_reg = cur.act_reg;
        switch (sel) {
          case Source::None:
            nxt.act_reg.reset();
            break;
          case Source::External:
            if (!in.ext[idx(r, c)]) missing(r, c, "external");
            nxt.act_reg = in.ext[idx(r, c)];
            break;
          case Source::Horizontal:
            if (c == k_ - 1) missing(r, c, "horizontal (no right neighbour)");
            nxt.act_reg = at(grid_, r, c + 1).act_reg;
            break;
          case Source::DiagonalShift:
          case Source::DiagonalShadow:
            if (in.restore && in.restore->row == r) {
              nxt.act_reg = in.restore->values[static_cast<std::size_t>(c)];
            } else if (c == k_ - 1 && in.diag[static_cast<std::size_t>(r)]) {
              nxt.act_reg = in.diag[static_cast<std::size_t>(r)];
            } else {
              missing(r, c, "diagonal");
            }
            break;
        }
        if (cur.act_reg) {
          nxt.prod_reg = static_cast<Psum>(cur.act_reg->value) * static_cast<Psum>(cur.weight_reg);
        } else {
          nxt.prod_reg.reset();
        }
        const std::optional<Psum> above = r == 0 ? std::optional<Psum>(0) : at(grid_, r - 1, c).psum_reg;
        if (cur.prod_reg && above) {
          nxt.psum_reg = *cur.prod_reg + *above;
        } else {
          nxt.psum_reg.reset();
        }
      }
    }
    grid_.swap(next_);

    bool complete = true;
    for (int c = 0; c < k_; ++c) {
      const auto& p = at(grid_, k_ - 1, c).psum_reg;
      if (!p) {
        complete = false;
        break;
      }
      bottom_[static_cast<std::size_t>(c)] = *p;
    }
    tree_out_ = complete ? std::optional<Psum>(adder_tree_sum(bottom_, static_cast<std::size_t>(k_))) : std::nullopt;
    for (int r = 0; r < k_; ++r) exits_[static_cast<std::size_t>(r)] = at(grid_, r, 0).pass_left_reg;
    return {tree_out_, exits_};
  }

  /// Clears activations and the psum pipeline; weights stay.
  void end_stream() {
    for (auto& pe : grid_) {
      const Weight w = pe.weight_reg;
      pe = PEState{};
      pe.weight_reg = w;
    }
    tree_out_.reset();
    std::fill(exits_.begin(), exits_.end(), std::nullopt);
    busy_ = false;
  }

  const PEState& pe(int r, int c) const { return at(grid_, r, c); }

  PEState pe_state(int r, int c) const {
    if (r < 0 || c < 0 || r >= k_ || c >= k_) {
      fail(ErrorCode::OutOfBounds, "PE (" + std::to_string(r) + "," + std::to_string(c) + ") outside slice");
    }
    return at(grid_, r, c);
  }

  std::optional<Psum> tree_out() const noexcept { return tree_out_; }

 private:
  std::size_t idx(int r, int c) const noexcept { return static_cast<std::size_t>(r * k_ + c); }
  PEState& at(std::vector<PEState>& g, int r, int c) { return g[idx(r, c)]; }
  const PEState& at(const std::vector<PEState>& g, int r, int c) const { return g[idx(r, c)]; }

  [[noreturn]] static void missing(int r, int c, const char* what) {
    fail(ErrorCode::MissingInput,
         "PE (" + std::to_string(r) + "," + std::to_string(c) + ") selected " + what + " but no value was supplied");
  }

  int k_;
  std::vector<PEState> grid_;
  std::vector<PEState> next_;
  std::vector<std::optional<Act>> exits_;
  std::vector<Psum> bottom_;
  std::optional<Psum> tree_out_;
  bool busy_ = false;
};

}  // namespace trim3d
