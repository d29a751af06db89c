#pragma once

// Loading user-supplied tensors. Text files hold integers separated by
// whitespace or commas ('#' comments allowed); files ending in ".bin" hold raw
// signed bytes. Ifmaps are channel-major, filters are filter-major then
// channel-major, every plane row-major.

#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

inline std::vector<std::int8_t> read_int8_values(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::int8_t> out;
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0) {
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    for (char b : bytes) out.push_back(static_cast<std::int8_t>(b));
    return out;
  }
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    long v = 0;
    while (ls >> v) {
      if (v < -128 || v > 127) {
        fail(ErrorCode::RangeError, path + ":" + std::to_string(line_no) + ": value " + std::to_string(v) +
                                        " outside signed 8-bit range");
      }
      out.push_back(static_cast<std::int8_t>(v));
    }
    if (!ls.eof()) fail(ErrorCode::IoError, path + ":" + std::to_string(line_no) + ": non-numeric field");
  }
  return out;
}

inline std::vector<TensorI> load_ifmaps(const std::string& path, const LayerConfig& l) {
  const auto v = read_int8_values(path);
  const std::size_t plane = static_cast<std::size_t>(l.ifmap_height) * static_cast<std::size_t>(l.ifmap_width);
  if (v.size() != plane * static_cast<std::size_t>(l.in_channels)) {
    fail(ErrorCode::ShapeMismatch, path + " holds " + std::to_string(v.size()) + " values, layer needs " +
                                       std::to_string(plane * static_cast<std::size_t>(l.in_channels)));
  }
  std::vector<TensorI> out;
  for (int c = 0; c < l.in_channels; ++c) {
    const auto first = v.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(c));
    out.emplace_back(l.ifmap_height, l.ifmap_width,
                     std::vector<Activation>(first, first + static_cast<std::ptrdiff_t>(plane)));
  }
  return out;
}

inline FilterBank load_filters(const std::string& path, const LayerConfig& l) {
  const auto v = read_int8_values(path);
  const std::size_t plane = static_cast<std::size_t>(l.kernel_size) * static_cast<std::size_t>(l.kernel_size);
  const std::size_t need = plane * static_cast<std::size_t>(l.in_channels) * static_cast<std::size_t>(l.num_filters);
  if (v.size() != need) {
    fail(ErrorCode::ShapeMismatch,
         path + " holds " + std::to_string(v.size()) + " values, layer needs " + std::to_string(need));
  }
  FilterBank bank(static_cast<std::size_t>(l.num_filters));
  std::size_t pos = 0;
  for (auto& f : bank) {
    for (int c = 0; c < l.in_channels; ++c) {
      const auto first = v.begin() + static_cast<std::ptrdiff_t>(pos);
      f.emplace_back(l.kernel_size, l.kernel_size,
                     std::vector<Weight>(first, first + static_cast<std::ptrdiff_t>(plane)));
      pos += plane;
    }
  }
  return bank;
}

/// Activation (r, c) = r * W + c + 1, wrapped to 8 bits. Small ifmaps read as
/// their 1-based raster index.
inline std::vector<TensorI> ramp_ifmaps(const LayerConfig& l) {
  std::vector<TensorI> out;
  for (int ch = 0; ch < l.in_channels; ++ch) {
    TensorI m(l.ifmap_height, l.ifmap_width);
    for (int r = 0; r < l.ifmap_height; ++r)
      for (int c = 0; c < l.ifmap_width; ++c)
        m(r, c) = static_cast<Activation>(static_cast<std::uint8_t>((r * l.ifmap_width + c + 1) & 0xff));
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace trim3d
