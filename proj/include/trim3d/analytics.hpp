#pragma once

// Closed-form cost model. Every count here is meant to equal the simulator's
// event counters exactly for stride-1 layers; stride > 1 layers are modelled
// with the same window geometry evaluated at the strided positions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trim3d/array.hpp"
#include "trim3d/error.hpp"
#include "trim3d/memory.hpp"
#include "trim3d/workload.hpp"

namespace trim3d {

__extension__ using i128 = __int128;

/// Exact non-negative-denominator fraction over 64-bit integers.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) {
    if (den == 0) fail(ErrorCode::RangeError, "rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    num_ = g ? num / g : 0;
    den_ = g ? den / g : 1;
  }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Fixed-point rendering, rounded half away from zero.
  std::string str(int decimals = 2) const {
    i128 scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    const bool neg = num_ < 0;
    const i128 n = static_cast<i128>(neg ? -num_ : num_) * scale;
    const i128 q = (2 * n + den_) / (2 * static_cast<i128>(den_));
    const auto whole = static_cast<long long>(q / scale);
    auto frac = static_cast<long long>(q % scale);
    std::ostringstream os;
    if (neg && q != 0) os << '-';
    os << whole;
    if (decimals > 0) os << '.' << std::setw(decimals) << std::setfill('0') << frac;
    return os.str();
  }

  friend Rational operator*(const Rational& a, const Rational& b) { return make(mul(a.num_, b.num_), mul(a.den_, b.den_)); }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) fail(ErrorCode::RangeError, "division by zero rational");
    return make(mul(a.num_, b.den_), mul(a.den_, b.num_));
  }
  friend Rational operator+(const Rational& a, const Rational& b) {
    return make(mul(a.num_, b.den_) + mul(b.num_, a.den_), mul(a.den_, b.den_));
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return make(mul(a.num_, b.den_) - mul(b.num_, a.den_), mul(a.den_, b.den_));
  }
  friend bool operator==(const Rational&, const Rational&) = default;
  friend auto operator<=>(const Rational& a, const Rational& b) {
    return mul(a.num_, b.den_) <=> mul(b.num_, a.den_);
  }
  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.num_ << '/' << r.den_; }

 private:
  static i128 mul(i128 a, i128 b) { return a * b; }
  static Rational make(i128 num, i128 den) {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    i128 a = num < 0 ? -num : num;
    i128 b = den;
    while (b != 0) {
      const i128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      num /= a;
      den /= a;
    }
    constexpr i128 lim = INT64_MAX;
    if (num > lim || num < -lim || den > lim || den == 0) fail(ErrorCode::RangeError, "rational overflow");
    Rational r;
    r.num_ = static_cast<std::int64_t>(num);
    r.den_ = static_cast<std::int64_t>(den);
    return r;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

enum class AccessMode { ThreeD, TrimCompat };

constexpr std::string_view to_string(AccessMode m) { return m == AccessMode::ThreeD ? "3d-trim" : "trim"; }

/// Which traffic categories the OPs/Access/Slice denominator includes.
enum class CountingConvention { IfmapOnly, IfmapWeights, AllTraffic };

constexpr std::string_view to_string(CountingConvention c) {
  switch (c) {
    case CountingConvention::IfmapOnly: return "ifmap";
    case CountingConvention::IfmapWeights: return "ifmap+w";
    case CountingConvention::AllTraffic: return "all";
  }
  return "?";
}

inline CountingConvention parse_counting(std::string_view s) {
  if (s == "ifmap") return CountingConvention::IfmapOnly;
  if (s == "ifmap+w") return CountingConvention::IfmapWeights;
  if (s == "all") return CountingConvention::AllTraffic;
  fail(ErrorCode::UsageError, "counting convention must be ifmap, ifmap+w or all (got '" + std::string(s) + "')");
}

inline std::uint64_t accesses_under(const AccessCounters& c, CountingConvention conv) {
  switch (conv) {
    case CountingConvention::IfmapOnly: return c.ifmap_reads;
    case CountingConvention::IfmapWeights: return c.ifmap_reads + c.weight_reads;
    case CountingConvention::AllTraffic: return c.total();
  }
  return 0;
}

/// Slice counts used for normalization: 8 x 8 here, 7 x 24 for the TrIM reference.
constexpr int n_slices(AccessMode m) { return m == AccessMode::ThreeD ? 64 : 168; }

inline Rational slice_factor() { return Rational(n_slices(AccessMode::TrimCompat), n_slices(AccessMode::ThreeD)); }

/// 2 * K^2 * C * H_O * W_O * F (one MAC = two operations).
inline std::uint64_t count_ops(const LayerConfig& l) {
  return 2ull * static_cast<std::uint64_t>(l.kernel_size) * static_cast<std::uint64_t>(l.kernel_size) *
         static_cast<std::uint64_t>(l.in_channels) * static_cast<std::uint64_t>(l.out_height) *
         static_cast<std::uint64_t>(l.out_width) * static_cast<std::uint64_t>(l.num_filters);
}

/// Per-channel ifmap reads of a single-tile, unpadded layer:
/// W*H, plus (K-1)^2 * (H_O-1) end-of-row re-fetches without shadow registers.
inline std::uint64_t model_ifmap_accesses(const LayerConfig& l, AccessMode mode) {
  if (l.stride != 1) fail(ErrorCode::UnsupportedMode, "per-channel access model is defined for stride 1");
  const auto base = static_cast<std::uint64_t>(l.ifmap_width) * static_cast<std::uint64_t>(l.ifmap_height);
  if (mode == AccessMode::ThreeD) return base;
  const auto k1 = static_cast<std::uint64_t>(l.kernel_size - 1);
  return base + k1 * k1 * static_cast<std::uint64_t>(std::max(0, l.out_height - 1));
}

namespace detail {

// Padded-frame positions touched along one axis by sub-kernel offset `off`.
inline std::vector<int> touched(int off, int outputs, int stride, int k_hw, int streamed) {
  std::vector<int> pos;
  if (stride == 1) {
    for (int i = 0; i < streamed; ++i) pos.push_back(off + i);
    return pos;
  }
  for (int o = 0; o < outputs; ++o)
    for (int r = 0; r < k_hw; ++r) pos.push_back(off + o * stride + r);
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

inline bool real_row(const LayerConfig& l, int r) { return r >= l.padding && r < l.padding + l.ifmap_height; }
inline bool real_col(const LayerConfig& l, int c) { return c >= l.padding && c < l.padding + l.ifmap_width; }

}  // namespace detail

/// Ifmap reads of one (channel, sub-kernel) stream over one pass.
inline std::uint64_t model_stream_reads(const LayerConfig& l, int k_hw, SubKernel off, AccessMode mode) {
  const int s = l.stride;
  const int width = std::max(l.out_width + k_hw - 1, 2 * k_hw);
  const auto rows = detail::touched(off.row_offset, l.out_height, s, k_hw, l.out_height + k_hw - 1);
  const auto cols = detail::touched(off.col_offset, l.out_width, s, k_hw, width);
  const auto real_rows = static_cast<std::uint64_t>(std::count_if(rows.begin(), rows.end(), [&](int r) {
    return detail::real_row(l, r);
  }));
  const auto real_cols = static_cast<std::uint64_t>(std::count_if(cols.begin(), cols.end(), [&](int c) {
    return detail::real_col(l, c);
  }));
  std::uint64_t reads = real_rows * real_cols;
  if (mode == AccessMode::TrimCompat) {
    // End-of-row activations of every reused row are fetched again.
    const int tail = std::min<int>(k_hw - 1, static_cast<int>(cols.size()));
    const auto tail_real = static_cast<std::uint64_t>(
        std::count_if(cols.end() - tail, cols.end(), [&](int c) { return detail::real_col(l, c); }));
    const int reused = std::max(0, k_hw - s);
    for (int y = 1; y < l.out_height; ++y) {
      for (int r = 0; r < std::min(reused, k_hw - 1); ++r) {
        if (detail::real_row(l, off.row_offset + y * s + r)) reads += tail_real;
      }
    }
  }
  return reads;
}

/// Per-category external traffic of a whole layer under the tiling of `arch`.
inline AccessCounters model_counters(const LayerConfig& l, const ArchConfig& arch, AccessMode mode,
                                     bool count_spill = true) {
  const auto plan = plan_tiling(l, arch, PlanTarget::Analytics);
  AccessCounters c;
  std::uint64_t per_filter_group = 0;
  for (const auto& off : plan.sub_kernel_map) per_filter_group += model_stream_reads(l, arch.kernel_hw, off, mode);
  c.ifmap_reads = static_cast<std::uint64_t>(plan.filter_groups) * static_cast<std::uint64_t>(l.in_channels) *
                  per_filter_group;
  const auto f = static_cast<std::uint64_t>(l.num_filters);
  const auto outputs = f * static_cast<std::uint64_t>(l.out_height) * static_cast<std::uint64_t>(l.out_width);
  c.weight_reads = f * static_cast<std::uint64_t>(l.in_channels) * static_cast<std::uint64_t>(l.kernel_size) *
                   static_cast<std::uint64_t>(l.kernel_size);
  c.ofmap_writes = outputs;
  if (count_spill) {
    c.psum_spill_writes = outputs * static_cast<std::uint64_t>(plan.unit_groups - 1);
    c.psum_spill_reads = c.psum_spill_writes;
  }
  return c;
}

/// Cycles of the stride-1 schedule: per pass K_hw weight-load cycles, one slot
/// per (padded, extended) window, and the K_hw + 1 cycle skew and drain.
inline std::uint64_t model_cycles(const LayerConfig& l, const ArchConfig& arch) {
  const auto plan = plan_tiling(l, arch, PlanTarget::Analytics);
  const int k = arch.kernel_hw;
  const int windows = std::max(l.out_width + k - 1, 2 * k) - k + 1;
  const auto per_pass = static_cast<std::uint64_t>(l.out_height) * static_cast<std::uint64_t>(windows) +
                        static_cast<std::uint64_t>(2 * k + 1);
  return static_cast<std::uint64_t>(plan.passes) * per_pass;
}

inline Rational ops_per_access_per_slice(std::uint64_t ops, std::uint64_t accesses, AccessMode mode) {
  if (accesses == 0) fail(ErrorCode::RangeError, "no memory accesses under the chosen convention");
  return Rational(static_cast<std::int64_t>(ops)) /
         Rational(static_cast<std::int64_t>(accesses) * n_slices(mode));
}

inline Rational ops_per_access_per_slice(const LayerConfig& l, const ArchConfig& arch, AccessMode mode,
                                         CountingConvention conv, bool count_spill = true) {
  return ops_per_access_per_slice(count_ops(l), accesses_under(model_counters(l, arch, mode, count_spill), conv), mode);
}

/// 100 * (K-1)^2 * (H_O-1) / (W*H) for square, unpadded ifmaps.
inline std::vector<Rational> overhead_curve(const std::vector<int>& sizes, int k) {
  std::vector<Rational> out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const int n = sizes[i];
    if (n < k + 2) fail(ErrorCode::RangeError, "ifmap size " + std::to_string(n) + " below K+2");
    if (i > 0 && n <= sizes[i - 1]) fail(ErrorCode::RangeError, "sizes must be strictly ascending");
    const std::int64_t ho = n - k + 1;
    out.emplace_back(100 * (k - 1) * (k - 1) * (ho - 1), static_cast<std::int64_t>(n) * n);
  }
  return out;
}

/// 2 * P_I * P_O * K_hw^2 * f, in operations per second.
inline double peak_throughput(const ArchConfig& arch) { return 2.0 * arch.pe_count() * arch.clock_hz; }

inline std::string format_tops(double ops_per_second) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << ops_per_second / 1e12 << " TOPS";
  return os.str();
}

struct CounterDelta {
  std::string category;
  std::int64_t model = 0;
  std::int64_t simulated = 0;
  std::int64_t delta() const noexcept { return simulated - model; }
};

/// Per-category comparison; throws ModelMismatch naming the first differing category.
inline std::vector<CounterDelta> compare_counters(const AccessCounters& model, const AccessCounters& sim) {
  const std::pair<const char*, std::uint64_t AccessCounters::*> cats[] = {
      {"ifmap_reads", &AccessCounters::ifmap_reads},
      {"weight_reads", &AccessCounters::weight_reads},
      {"ofmap_writes", &AccessCounters::ofmap_writes},
      {"psum_spill_writes", &AccessCounters::psum_spill_writes},
      {"psum_spill_reads", &AccessCounters::psum_spill_reads},
  };
  std::vector<CounterDelta> out;
  for (const auto& [name, member] : cats) {
    out.push_back({name, static_cast<std::int64_t>(model.*member), static_cast<std::int64_t>(sim.*member)});
  }
  for (const auto& d : out) {
    if (d.delta() != 0) {
      fail(ErrorCode::ModelMismatch, d.category + ": model " + std::to_string(d.model) + ", simulator " +
                                         std::to_string(d.simulated));
    }
  }
  return out;
}

/// Simulates the layer on seeded random tensors and checks the model against the counters.
inline std::vector<CounterDelta> validate_model_vs_sim(const LayerConfig& l, ArchConfig arch, AccessMode mode,
                                                       std::uint64_t seed = 1, bool count_spill = true) {
  arch.shadow_enabled = mode == AccessMode::ThreeD;
  std::mt19937_64 rng(seed);
  auto ifmaps = random_ifmaps(l.in_channels, l.ifmap_height, l.ifmap_width, rng);
  auto filters = random_filters(l.num_filters, l.in_channels, l.kernel_size, rng);
  RunOptions opt;
  opt.check_invariants = false;
  opt.count_spill = count_spill;
  const auto res = simulate_layer(arch, l, std::move(ifmaps), std::move(filters), opt);
  return compare_counters(model_counters(l, arch, mode, count_spill), res.counters);
}

struct LayerMetrics {
  LayerConfig layer;
  std::uint64_t ops = 0;
  AccessCounters accesses_3d;
  AccessCounters accesses_trim;
  Rational opas_3d;
  Rational opas_trim;
  Rational improvement;       // opas_3d / opas_trim
  Rational access_ratio;      // trim / 3d accesses under the convention
  Rational overhead_percent;  // TrIM ifmap re-fetch overhead; zero with shadow registers
  std::uint64_t cycles = 0;
  Rational utilization;       // ops / (cycles * 2 * PEs)
};

struct MetricsReport {
  ArchConfig arch;
  CountingConvention convention = CountingConvention::IfmapOnly;
  bool count_spill = true;
  std::vector<LayerMetrics> layers;
  double peak_ops = 0.0;

  Rational min_improvement() const {
    if (layers.empty()) fail(ErrorCode::RangeError, "empty report");
    return std::min_element(layers.begin(), layers.end(),
                            [](const auto& a, const auto& b) { return a.improvement < b.improvement; })
        ->improvement;
  }
  Rational max_improvement() const {
    if (layers.empty()) fail(ErrorCode::RangeError, "empty report");
    return std::max_element(layers.begin(), layers.end(),
                            [](const auto& a, const auto& b) { return a.improvement < b.improvement; })
        ->improvement;
  }
};

inline LayerMetrics layer_metrics(const LayerConfig& l, const ArchConfig& arch, CountingConvention conv,
                                  bool count_spill = true) {
  LayerMetrics m;
  m.layer = l;
  m.ops = count_ops(l);
  m.accesses_3d = model_counters(l, arch, AccessMode::ThreeD, count_spill);
  m.accesses_trim = model_counters(l, arch, AccessMode::TrimCompat, count_spill);
  const auto a3 = accesses_under(m.accesses_3d, conv);
  const auto at = accesses_under(m.accesses_trim, conv);
  m.opas_3d = ops_per_access_per_slice(m.ops, a3, AccessMode::ThreeD);
  m.opas_trim = ops_per_access_per_slice(m.ops, at, AccessMode::TrimCompat);
  m.improvement = m.opas_3d / m.opas_trim;
  m.access_ratio = Rational(static_cast<std::int64_t>(at), static_cast<std::int64_t>(a3));
  m.overhead_percent = Rational(100 * static_cast<std::int64_t>(m.accesses_trim.ifmap_reads - m.accesses_3d.ifmap_reads),
                                static_cast<std::int64_t>(m.accesses_3d.ifmap_reads));
  m.cycles = model_cycles(l, arch);
  m.utilization = Rational(static_cast<std::int64_t>(m.ops)) /
                  Rational(static_cast<std::int64_t>(m.cycles) * 2 * arch.pe_count());
  return m;
}

inline MetricsReport improvement_table(const std::vector<LayerConfig>& layers, const ArchConfig& arch,
                                       CountingConvention conv, bool count_spill = true) {
  MetricsReport r;
  r.arch = arch;
  r.convention = conv;
  r.count_spill = count_spill;
  r.peak_ops = peak_throughput(arch);
  for (const auto& l : layers) r.layers.push_back(layer_metrics(l, arch, conv, count_spill));
  return r;
}

/// Expected per-topology improvement intervals.
struct TargetRange {
  Rational low;
  Rational high;
};

inline std::optional<TargetRange> target_range(const std::string& topology) {
  if (topology == "vgg16") return TargetRange{Rational(282, 100), Rational(337, 100)};
  if (topology == "alexnet") return TargetRange{Rational(143, 100), Rational(333, 100)};
  return std::nullopt;
}

/// Whether every layer's ratio lies within [low - tol, high + tol].
inline bool within(const MetricsReport& r, const TargetRange& t, Rational tol = Rational(15, 100)) {
  return std::all_of(r.layers.begin(), r.layers.end(), [&](const LayerMetrics& m) {
    return m.improvement >= t.low - tol && m.improvement <= t.high + tol;
  });
}

}  // namespace trim3d
