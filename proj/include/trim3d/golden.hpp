#pragma once

// Brute-force convolution oracle. Deliberately naive loops; the simulator must
// agree with these results bit for bit.

#include <cstdint>
#include <string>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

struct GoldenResult {
  TensorO ofmap;
  std::uint64_t macs = 0;
};

/// Cross-correlation (no kernel flip) over the un-padded input.
inline GoldenResult conv2d_valid(const TensorI& ifmap, const TensorW& kernel, int stride = 1) {
  if (kernel.height() > ifmap.height() || kernel.width() > ifmap.width() || kernel.empty()) {
    fail(ErrorCode::ShapeMismatch, "kernel " + std::to_string(kernel.height()) + "x" + std::to_string(kernel.width()) +
                                       " does not fit ifmap " + std::to_string(ifmap.height()) + "x" +
                                       std::to_string(ifmap.width()));
  }
  if (stride < 1) fail(ErrorCode::NonPositiveDim, "stride must be positive");
  const int oh = (ifmap.height() - kernel.height()) / stride + 1;
  const int ow = (ifmap.width() - kernel.width()) / stride + 1;
  GoldenResult res{TensorO(oh, ow), 0};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      Psum acc = 0;
      for (int r = 0; r < kernel.height(); ++r) {
        for (int c = 0; c < kernel.width(); ++c) {
          acc += static_cast<Psum>(ifmap(y * stride + r, x * stride + c)) * static_cast<Psum>(kernel(r, c));
          ++res.macs;
        }
      }
      res.ofmap(y, x) = acc;
    }
  }
  return res;
}

/// One result per filter: sum over input channels of the per-channel convolution.
inline std::vector<GoldenResult> conv_multichannel(const std::vector<TensorI>& ifmaps, const FilterBank& filters,
                                                   int stride = 1) {
  std::vector<GoldenResult> out;
  out.reserve(filters.size());
  for (std::size_t f = 0; f < filters.size(); ++f) {
    if (filters[f].size() != ifmaps.size()) {
      fail(ErrorCode::ChannelCountMismatch, "filter " + std::to_string(f) + " has " + std::to_string(filters[f].size()) +
                                                " kernels for " + std::to_string(ifmaps.size()) + " channels");
    }
    GoldenResult acc;
    for (std::size_t c = 0; c < ifmaps.size(); ++c) {
      if (ifmaps[c].height() != ifmaps[0].height() || ifmaps[c].width() != ifmaps[0].width()) {
        fail(ErrorCode::ShapeMismatch, "input channels differ in shape");
      }
      GoldenResult part = conv2d_valid(ifmaps[c], filters[f][c], stride);
      if (c == 0) {
        acc = std::move(part);
        continue;
      }
      for (int y = 0; y < acc.ofmap.height(); ++y)
        for (int x = 0; x < acc.ofmap.width(); ++x) acc.ofmap(y, x) += part.ofmap(y, x);
      acc.macs += part.macs;
    }
    out.push_back(std::move(acc));
  }
  return out;
}

/// Same result as conv2d_valid, computed as the sum of K_hw x K_hw sub-kernel
/// convolutions, each read at its tile offset. Positions past the ifmap edge
/// only ever meet zero-padded tile weights.
inline GoldenResult conv_via_tiles(const TensorI& ifmap, const TensorW& kernel, const TilingPlan& plan) {
  if (kernel.height() != plan.kernel_size || kernel.width() != plan.kernel_size) {
    fail(ErrorCode::PlanMismatch, "plan was built for K=" + std::to_string(plan.kernel_size));
  }
  const auto tiles = pad_kernel_tiles(kernel, plan.kernel_hw);
  if (tiles.size() != plan.sub_kernel_map.size()) fail(ErrorCode::PlanMismatch, "tile count disagrees with plan");
  if (kernel.height() > ifmap.height() || kernel.width() > ifmap.width()) {
    fail(ErrorCode::ShapeMismatch, "kernel larger than ifmap");
  }
  const int oh = ifmap.height() - kernel.height() + 1;
  const int ow = ifmap.width() - kernel.width() + 1;
  GoldenResult res{TensorO(oh, ow), 0};
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto off = plan.sub_kernel_map[t];
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        Psum acc = 0;
        for (int r = 0; r < plan.kernel_hw; ++r) {
          for (int c = 0; c < plan.kernel_hw; ++c) {
            const int iy = y + off.row_offset + r;
            const int ix = x + off.col_offset + c;
            const Psum a = ifmap.contains(iy, ix) ? static_cast<Psum>(ifmap(iy, ix)) : 0;
            acc += a * static_cast<Psum>(tiles[t](r, c));
            ++res.macs;
          }
        }
        res.ofmap(y, x) += acc;
      }
    }
  }
  return res;
}

/// Reference ofmaps for a whole layer: zero-pads, then convolves every filter.
inline std::vector<TensorO> golden_layer(const LayerConfig& layer, const std::vector<TensorI>& ifmaps,
                                         const FilterBank& filters) {
  std::vector<TensorI> padded;
  padded.reserve(ifmaps.size());
  for (const auto& m : ifmaps) padded.push_back(pad_zero(m, layer.padding));
  std::vector<TensorO> out;
  for (auto& r : conv_multichannel(padded, filters, layer.stride)) out.push_back(std::move(r.ofmap));
  return out;
}

}  // namespace trim3d
