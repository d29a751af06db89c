#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"

namespace trim3d {

/// One convolution layer. Output dimensions are derived and validated by
/// make_layer_config; construct through it rather than aggregate-initializing.
struct LayerConfig {
  int ifmap_width = 0;
  int ifmap_height = 0;
  int in_channels = 0;
  int num_filters = 0;
  int kernel_size = 0;
  int stride = 1;
  int padding = 0;
  int out_height = 0;
  int out_width = 0;

  int padded_width() const noexcept { return ifmap_width + 2 * padding; }
  int padded_height() const noexcept { return ifmap_height + 2 * padding; }

  /// "(I,C,F,K)" label, with the width standing in for I.
  std::string label() const {
    return "(" + std::to_string(ifmap_width) + "," + std::to_string(in_channels) + "," +
           std::to_string(num_filters) + "," + std::to_string(kernel_size) + ")";
  }

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

inline LayerConfig make_layer_config(int width, int height, int channels, int filters, int kernel, int stride,
                                     int padding) {
  if (width <= 0 || height <= 0 || channels <= 0 || filters <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
    fail(ErrorCode::NonPositiveDim, "layer dimensions must be positive (padding nonnegative)");
  }
  const int pw = width + 2 * padding;
  const int ph = height + 2 * padding;
  if (kernel > pw || kernel > ph) {
    fail(ErrorCode::KernelLargerThanPaddedIfmap,
         "kernel " + std::to_string(kernel) + " exceeds padded ifmap " + std::to_string(ph) + "x" + std::to_string(pw));
  }
  if ((pw - kernel) % stride != 0 || (ph - kernel) % stride != 0) {
    fail(ErrorCode::StrideIndivisible, "stride " + std::to_string(stride) + " does not tile the padded ifmap");
  }
  LayerConfig l;
  l.ifmap_width = width;
  l.ifmap_height = height;
  l.in_channels = channels;
  l.num_filters = filters;
  l.kernel_size = kernel;
  l.stride = stride;
  l.padding = padding;
  l.out_height = (ph - kernel) / stride + 1;
  l.out_width = (pw - kernel) / stride + 1;
  return l;
}

struct ArchConfig {
  int cores = 8;            // P_I: ifmaps (channels) processed in parallel
  int slices_per_core = 8;  // P_O: filters processed in parallel
  int kernel_hw = 3;
  int buffer_capacity = 256;  // widest ifmap row the recycling buffer can be configured for
  double clock_hz = 1.0e9;
  bool shadow_enabled = true;  // false reproduces the TrIM end-of-row re-fetch behaviour

  int pe_count() const noexcept { return cores * slices_per_core * kernel_hw * kernel_hw; }
  int slice_count() const noexcept { return cores * slices_per_core; }

  void validate() const {
    if (cores < 1 || slices_per_core < 1) fail(ErrorCode::InvalidArch, "P_I and P_O must be at least 1");
    if (kernel_hw < 2) fail(ErrorCode::InvalidArch, "hardware kernel size must be at least 2");
    if (buffer_capacity < kernel_hw + 2) fail(ErrorCode::InvalidArch, "buffer capacity must be at least K_hw + 2");
    if (!(clock_hz > 0.0)) fail(ErrorCode::InvalidArch, "clock frequency must be positive");
  }
};

inline std::vector<LayerConfig> vgg16_layers() {
  // (ifmap, in channels, filters); all 3x3, stride 1, same padding.
  static constexpr int table[13][3] = {
      {224, 3, 64},   {224, 64, 64},  {112, 64, 128}, {112, 128, 128}, {56, 128, 256},
      {56, 256, 256}, {56, 256, 256}, {28, 256, 512}, {28, 512, 512},  {28, 512, 512},
      {14, 512, 512}, {14, 512, 512}, {14, 512, 512},
  };
  std::vector<LayerConfig> layers;
  for (const auto& row : table) layers.push_back(make_layer_config(row[0], row[0], row[1], row[2], 3, 1, 1));
  return layers;
}

inline std::vector<LayerConfig> alexnet_layers() {
  return {
      make_layer_config(227, 227, 3, 96, 11, 4, 0),
      make_layer_config(27, 27, 96, 256, 5, 1, 2),
      make_layer_config(13, 13, 256, 384, 3, 1, 1),
      make_layer_config(13, 13, 384, 384, 3, 1, 1),
      make_layer_config(13, 13, 384, 256, 3, 1, 1),
  };
}

/// Built-in topologies by name: "vgg16" or "alexnet".
inline std::vector<LayerConfig> topology_by_name(const std::string& name) {
  if (name == "vgg16" || name == "vgg-16") return vgg16_layers();
  if (name == "alexnet") return alexnet_layers();
  fail(ErrorCode::UsageError, "unknown topology '" + name + "' (expected vgg16 or alexnet)");
}

// Layer table text format: one layer per line, "W H C F K S P", '#' starts a comment.

inline std::string to_table_line(const LayerConfig& l) {
  std::ostringstream os;
  os << l.ifmap_width << ' ' << l.ifmap_height << ' ' << l.in_channels << ' ' << l.num_filters << ' '
     << l.kernel_size << ' ' << l.stride << ' ' << l.padding;
  return os.str();
}

inline void write_layer_table(std::ostream& os, const std::vector<LayerConfig>& layers) {
  os << "# W H C F K S P\n";
  for (const auto& l : layers) os << to_table_line(l) << '\n';
}

inline std::vector<LayerConfig> read_layer_table(std::istream& is) {
  std::vector<LayerConfig> layers;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<long long> fields;
    long long v = 0;
    while (ls >> v) fields.push_back(v);
    if (!ls.eof()) fail(ErrorCode::UsageError, "layer table line " + std::to_string(line_no) + ": non-numeric field");
    if (fields.empty()) continue;
    if (fields.size() != 7) {
      fail(ErrorCode::UsageError, "layer table line " + std::to_string(line_no) + ": expected 7 fields (W H C F K S P)");
    }
    layers.push_back(make_layer_config(static_cast<int>(fields[0]), static_cast<int>(fields[1]),
                                       static_cast<int>(fields[2]), static_cast<int>(fields[3]),
                                       static_cast<int>(fields[4]), static_cast<int>(fields[5]),
                                       static_cast<int>(fields[6])));
  }
  return layers;
}

// ---------------------------------------------------------------------------
// Tiling

enum class PlanTarget { Simulator, Analytics };

/// Offset (in kernel coordinates) of a K_hw x K_hw sub-kernel inside the
/// zero-padded original kernel.
struct SubKernel {
  int row_offset = 0;
  int col_offset = 0;
  friend bool operator==(const SubKernel&, const SubKernel&) = default;
};

/// What one core works on during a pass: one input channel against one sub-kernel.
struct WorkUnit {
  int channel = 0;
  int tile = 0;
  friend bool operator==(const WorkUnit&, const WorkUnit&) = default;
};

struct PassPlan {
  int filter_base = 0;
  int filter_count = 0;        // active slices per core
  int unit_group = 0;          // index of the (channel, tile) group, 0..unit_groups-1
  std::vector<WorkUnit> units;  // one per active core
  friend bool operator==(const PassPlan&, const PassPlan&) = default;
};

struct TilingPlan {
  int kernel_size = 0;
  int kernel_hw = 0;
  int in_channels = 0;
  int num_filters = 0;
  int cores = 0;
  int slices_per_core = 0;
  PlanTarget target = PlanTarget::Simulator;

  int channel_groups = 0;  // ceil(C / P_I)
  int filter_groups = 0;   // ceil(F / P_O)
  int kernel_tiles = 0;    // ceil(K / K_hw)^2
  std::vector<SubKernel> sub_kernel_map;
  int unit_groups = 0;  // ceil(C * kernel_tiles / P_I)
  int passes = 0;       // unit_groups * filter_groups
  std::vector<PassPlan> schedule;

  friend bool operator==(const TilingPlan&, const TilingPlan&) = default;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Work units (channel, sub-kernel) are enumerated channel-major and packed
/// P_I to a pass; filters are packed P_O to a pass; passes run filter-major.
inline TilingPlan plan_tiling(const LayerConfig& layer, const ArchConfig& arch,
                              PlanTarget target = PlanTarget::Simulator) {
  arch.validate();
  if (target == PlanTarget::Simulator && layer.stride != 1) {
    fail(ErrorCode::UnsupportedStrideForSim, "the simulator streams stride-1 windows only (got stride " +
                                                 std::to_string(layer.stride) + ")");
  }
  TilingPlan plan;
  plan.kernel_size = layer.kernel_size;
  plan.kernel_hw = arch.kernel_hw;
  plan.in_channels = layer.in_channels;
  plan.num_filters = layer.num_filters;
  plan.cores = arch.cores;
  plan.slices_per_core = arch.slices_per_core;
  plan.target = target;

  const int per_side = ceil_div(layer.kernel_size, arch.kernel_hw);
  plan.channel_groups = ceil_div(layer.in_channels, arch.cores);
  plan.filter_groups = ceil_div(layer.num_filters, arch.slices_per_core);
  plan.kernel_tiles = per_side * per_side;
  for (int tr = 0; tr < per_side; ++tr)
    for (int tc = 0; tc < per_side; ++tc)
      plan.sub_kernel_map.push_back({tr * arch.kernel_hw, tc * arch.kernel_hw});

  const int units = layer.in_channels * plan.kernel_tiles;
  plan.unit_groups = ceil_div(units, arch.cores);
  plan.passes = plan.unit_groups * plan.filter_groups;

  for (int fg = 0; fg < plan.filter_groups; ++fg) {
    for (int ug = 0; ug < plan.unit_groups; ++ug) {
      PassPlan pass;
      pass.filter_base = fg * arch.slices_per_core;
      pass.filter_count = std::min(arch.slices_per_core, layer.num_filters - pass.filter_base);
      pass.unit_group = ug;
      for (int u = ug * arch.cores; u < std::min(units, (ug + 1) * arch.cores); ++u) {
        pass.units.push_back({u / plan.kernel_tiles, u % plan.kernel_tiles});
      }
      plan.schedule.push_back(std::move(pass));
    }
  }
  return plan;
}

/// Splits a square kernel into K_hw x K_hw tiles (row-major tile order),
/// zero-filling positions past the original kernel edge.
inline std::vector<TensorW> pad_kernel_tiles(const TensorW& kernel, int kernel_hw) {
  if (kernel.height() != kernel.width()) fail(ErrorCode::ShapeMismatch, "kernel must be square");
  if (kernel_hw < 1) fail(ErrorCode::InvalidArch, "tile size must be positive");
  const int k = kernel.height();
  const int per_side = ceil_div(k, kernel_hw);
  std::vector<TensorW> tiles;
  for (int tr = 0; tr < per_side; ++tr) {
    for (int tc = 0; tc < per_side; ++tc) {
      TensorW tile(kernel_hw, kernel_hw);
      for (int r = 0; r < kernel_hw; ++r) {
        for (int c = 0; c < kernel_hw; ++c) {
          const int kr = tr * kernel_hw + r;
          const int kc = tc * kernel_hw + c;
          if (kr < k && kc < k) tile(r, c) = kernel(kr, kc);
        }
      }
      tiles.push_back(std::move(tile));
    }
  }
  return tiles;
}

}  // namespace trim3d
