#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

/// Categorized external-memory event tallies.
struct AccessCounters {
  std::uint64_t ifmap_reads = 0;
  std::uint64_t weight_reads = 0;
  std::uint64_t ofmap_writes = 0;
  std::uint64_t psum_spill_writes = 0;
  std::uint64_t psum_spill_reads = 0;

  std::uint64_t total() const noexcept {
    return ifmap_reads + weight_reads + ofmap_writes + psum_spill_writes + psum_spill_reads;
  }
  friend bool operator==(const AccessCounters&, const AccessCounters&) = default;
};

/// Ifmap address touched more than once inside a pass. Coordinates are in the
/// un-padded ifmap.
struct RereadAddress {
  int stream = 0;
  int channel = 0;
  int row = 0;
  int col = 0;
};

/// Per-pass outcome of the per-address read bitmap.
struct ReadAudit {
  int pass = 0;
  std::uint64_t reads = 0;
  std::uint64_t rereads = 0;              // reads beyond the first, summed over addresses
  std::uint64_t expected_addresses = 0;   // real addresses inside the declared stream regions
  std::uint64_t unread_addresses = 0;     // expected but never read
  std::uint64_t unexpected_reads = 0;     // reads outside every declared region
  std::vector<RereadAddress> reread_addresses;

  bool single_fetch() const noexcept { return rereads == 0 && unread_addresses == 0 && unexpected_reads == 0; }
};

/// Simulated external memory. Ifmap coordinates are given in the zero-padded
/// frame; halo positions read as zero without generating traffic.
class MemoryImage {
 public:
  MemoryImage(const LayerConfig& layer, std::vector<TensorI> ifmaps, FilterBank filters, int kernel_hw,
              bool count_spill = true)
      : layer_(layer), ifmaps_(std::move(ifmaps)), filters_(std::move(filters)), kernel_hw_(kernel_hw),
        count_spill_(count_spill) {
    if (static_cast<int>(ifmaps_.size()) != layer.in_channels) {
      fail(ErrorCode::ChannelCountMismatch, "expected " + std::to_string(layer.in_channels) + " ifmap channels, got " +
                                                std::to_string(ifmaps_.size()));
    }
    for (const auto& m : ifmaps_) {
      if (m.height() != layer.ifmap_height || m.width() != layer.ifmap_width) {
        fail(ErrorCode::ShapeMismatch, "ifmap shape disagrees with layer");
      }
    }
    if (static_cast<int>(filters_.size()) != layer.num_filters) {
      fail(ErrorCode::ChannelCountMismatch, "expected " + std::to_string(layer.num_filters) + " filters");
    }
    for (const auto& f : filters_) {
      if (static_cast<int>(f.size()) != layer.in_channels) {
        fail(ErrorCode::ChannelCountMismatch, "filter kernel count disagrees with channel count");
      }
      for (const auto& k : f) {
        if (k.height() != layer.kernel_size || k.width() != layer.kernel_size) {
          fail(ErrorCode::ShapeMismatch, "kernel shape disagrees with layer");
        }
      }
    }
    tiles_per_side_ = ceil_div(layer.kernel_size, kernel_hw);
    outputs_.assign(static_cast<std::size_t>(layer.num_filters), TensorO(layer.out_height, layer.out_width));
    spill_.assign(static_cast<std::size_t>(layer.num_filters), TensorO(layer.out_height, layer.out_width));
  }

  const LayerConfig& layer() const noexcept { return layer_; }

  bool is_halo(int row, int col) const noexcept {
    const int p = layer_.padding;
    return row < p || col < p || row >= p + layer_.ifmap_height || col >= p + layer_.ifmap_width;
  }

  Activation read_activation(int channel, int row, int col, int stream = 0) {
    if (channel < 0 || channel >= layer_.in_channels || row < 0 || col < 0 || row >= layer_.padded_height() ||
        col >= layer_.padded_width()) {
      fail(ErrorCode::OutOfBounds, "activation (" + std::to_string(channel) + "," + std::to_string(row) + "," +
                                       std::to_string(col) + ") outside padded ifmap");
    }
    if (is_halo(row, col)) return 0;
    const int r = row - layer_.padding;
    const int c = col - layer_.padding;
    ++counters_.ifmap_reads;
    auto& bitmap = bitmap_for(stream, channel);
    auto& count = bitmap[static_cast<std::size_t>(r) * static_cast<std::size_t>(layer_.ifmap_width) +
                         static_cast<std::size_t>(c)];
    ++count;
    ++audit_.reads;
    if (count > 1) {
      ++audit_.rereads;
      audit_.reread_addresses.push_back({stream, channel, r, c});
    }
    return ifmaps_[static_cast<std::size_t>(channel)](r, c);
  }

  /// Uncounted lookup for checks and traces; zero outside the real ifmap.
  Activation peek_activation(int channel, int row, int col) const {
    if (channel < 0 || channel >= layer_.in_channels || row < 0 || col < 0 || row >= layer_.padded_height() ||
        col >= layer_.padded_width() || is_halo(row, col)) {
      return 0;
    }
    return ifmaps_[static_cast<std::size_t>(channel)](row - layer_.padding, col - layer_.padding);
  }

  /// Weight (r, c) of sub-kernel `tile`. Positions in the zero-padded part of
  /// the tile return zero without traffic.
  Weight read_weight(int filter, int channel, int tile, int r, int c) {
    if (filter < 0 || filter >= layer_.num_filters || channel < 0 || channel >= layer_.in_channels || tile < 0 ||
        tile >= tiles_per_side_ * tiles_per_side_ || r < 0 || c < 0 || r >= kernel_hw_ || c >= kernel_hw_) {
      fail(ErrorCode::OutOfBounds, "weight index outside filter bank");
    }
    const int kr = (tile / tiles_per_side_) * kernel_hw_ + r;
    const int kc = (tile % tiles_per_side_) * kernel_hw_ + c;
    if (kr >= layer_.kernel_size || kc >= layer_.kernel_size) return 0;
    ++counters_.weight_reads;
    return filters_[static_cast<std::size_t>(filter)][static_cast<std::size_t>(channel)](kr, kc);
  }

  void write_output(int filter, int row, int col, Psum value) {
    output_ref(outputs_, filter, row, col) = value;
    ++counters_.ofmap_writes;
  }

  /// Partial sums crossing pass boundaries. Counted only when spill accounting
  /// is on; otherwise they model an on-chip accumulator.
  void write_psum_spill(int filter, int row, int col, Psum value) {
    output_ref(spill_, filter, row, col) = value;
    if (count_spill_) ++counters_.psum_spill_writes;
  }
  Psum read_psum_spill(int filter, int row, int col) {
    const Psum v = output_ref(spill_, filter, row, col);
    if (count_spill_) ++counters_.psum_spill_reads;
    return v;
  }

  AccessCounters snapshot_counters() const noexcept { return counters_; }

  void begin_pass(int pass) {
    bitmaps_.clear();
    regions_.clear();
    audit_ = ReadAudit{};
    audit_.pass = pass;
  }

  /// Declares the padded-frame window a stream is expected to read during the pass.
  void expect_region(int stream, int channel, int row0, int rows, int col0, int cols) {
    regions_.push_back({stream, channel, row0, rows, col0, cols});
  }

  ReadAudit end_pass() {
    ReadAudit audit = audit_;
    const int p = layer_.padding;
    std::map<std::pair<int, int>, std::vector<char>> covered;
    for (const auto& reg : regions_) {
      auto& mask = covered[{reg.stream, reg.channel}];
      mask.resize(static_cast<std::size_t>(layer_.ifmap_height) * static_cast<std::size_t>(layer_.ifmap_width), 0);
      const auto* bitmap = find_bitmap(reg.stream, reg.channel);
      for (int row = reg.row0; row < reg.row0 + reg.rows; ++row) {
        for (int col = reg.col0; col < reg.col0 + reg.cols; ++col) {
          if (row < 0 || col < 0 || row >= layer_.padded_height() || col >= layer_.padded_width() ||
              is_halo(row, col)) {
            continue;
          }
          const auto idx = static_cast<std::size_t>(row - p) * static_cast<std::size_t>(layer_.ifmap_width) +
                           static_cast<std::size_t>(col - p);
          if (mask[idx]) continue;
          mask[idx] = 1;
          ++audit.expected_addresses;
          if (bitmap == nullptr || (*bitmap)[idx] == 0) ++audit.unread_addresses;
        }
      }
    }
    for (const auto& [key, bitmap] : bitmaps_) {
      const auto it = covered.find(key);
      for (std::size_t i = 0; i < bitmap.size(); ++i) {
        if (bitmap[i] != 0 && (it == covered.end() || !it->second[i])) audit.unexpected_reads += bitmap[i];
      }
    }
    bitmaps_.clear();
    regions_.clear();
    return audit;
  }

  const std::vector<TensorO>& outputs() const noexcept { return outputs_; }

 private:
  struct Region {
    int stream, channel, row0, rows, col0, cols;
  };

  std::vector<std::uint32_t>& bitmap_for(int stream, int channel) {
    auto& bm = bitmaps_[{stream, channel}];
    if (bm.empty()) {
      bm.assign(static_cast<std::size_t>(layer_.ifmap_height) * static_cast<std::size_t>(layer_.ifmap_width), 0);
    }
    return bm;
  }
  const std::vector<std::uint32_t>* find_bitmap(int stream, int channel) const {
    const auto it = bitmaps_.find({stream, channel});
    return it == bitmaps_.end() ? nullptr : &it->second;
  }

  Psum& output_ref(std::vector<TensorO>& store, int filter, int row, int col) {
    if (filter < 0 || filter >= layer_.num_filters || row < 0 || col < 0 || row >= layer_.out_height ||
        col >= layer_.out_width) {
      fail(ErrorCode::OutOfBounds, "output (" + std::to_string(filter) + "," + std::to_string(row) + "," +
                                       std::to_string(col) + ") outside ofmap");
    }
    return store[static_cast<std::size_t>(filter)](row, col);
  }

  LayerConfig layer_;
  std::vector<TensorI> ifmaps_;
  FilterBank filters_;
  int kernel_hw_;
  int tiles_per_side_ = 1;
  bool count_spill_;
  AccessCounters counters_;
  std::vector<TensorO> outputs_;
  std::vector<TensorO> spill_;
  std::map<std::pair<int, int>, std::vector<std::uint32_t>> bitmaps_;
  std::vector<Region> regions_;
  ReadAudit audit_;
};

}  // namespace trim3d
