#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "trim3d/analytics.hpp"
#include "trim3d/array.hpp"
#include "trim3d/golden.hpp"

using namespace trim3d;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

ArchConfig arch_of(int pi, int po, bool shadow = true) {
  ArchConfig a;
  a.cores = pi;
  a.slices_per_core = po;
  a.shadow_enabled = shadow;
  return a;
}

struct Case {
  LayerConfig layer;
  std::vector<TensorI> ifmaps;
  FilterBank filters;
};

Case random_case(std::mt19937_64& rng, int w, int h, int c, int f, int k, int pad = 0) {
  const auto l = make_layer_config(w, h, c, f, k, 1, pad);
  auto in = random_ifmaps(c, h, w, rng);
  auto fl = random_filters(f, c, k, rng);
  return {l, std::move(in), std::move(fl)};
}

LayerResult walkthrough(RunOptions opt) {
  const auto l = make_layer_config(8, 8, 1, 1, 3, 1, 0);
  return simulate_layer(arch_of(1, 1), l, {oracle::ramp(8, 8)}, {{TensorW(3, 3, Weight{1})}}, std::move(opt));
}

// Trace record whose local cycle maps to `ref` in the walkthrough numbering.
const CycleRecord& at_ref(const SimTrace& t, int ref) {
  for (const auto& r : t.records)
    if (r.local_cycle - t.header.reference_offset == ref) return r;
  throw std::runtime_error("reference cycle not recorded");
}

std::multiset<int> shadow_values(const CoreSnapshot& s) {
  std::multiset<int> v;
  for (const auto& row : s.shadow)
    for (const auto& a : row)
      if (a) v.insert(a->value);
  return v;
}

}  // namespace

TEST(Array, BuildCounts) {
  ArrayOrchestrator big(arch_of(8, 8));
  EXPECT_EQ(big.pe_count(), 576);
  EXPECT_EQ(big.irb_count(), 8);
  ArrayOrchestrator small(arch_of(2, 4));
  EXPECT_EQ(small.pe_count(), 72);
  EXPECT_EQ(small.irb_count(), 2);
  EXPECT_EQ(small.cross_tree_count(), 4);
  EXPECT_EQ(small.cross_tree_arity(), 2);
  EXPECT_EQ(small.phase().phase, Phase::Idle);
  EXPECT_EQ(code_of([] { ArrayOrchestrator(arch_of(0, 1)); }), ErrorCode::InvalidArch);
}

TEST(Array, CrossAccumulate) {
  const std::vector<std::optional<Psum>> one = {5};
  EXPECT_EQ(cross_accumulate(one), 5);
  const std::vector<std::optional<Psum>> cancel = {7, -7};
  EXPECT_EQ(cross_accumulate(cancel), 0);
  const std::vector<std::optional<Psum>> skew = {7, std::nullopt};
  EXPECT_EQ(code_of([&] { cross_accumulate(skew); }), ErrorCode::LaneDesync);
}

TEST(Array, SingleSliceMatchesGolden) {
  std::mt19937_64 rng(31);
  auto c = random_case(rng, 8, 8, 1, 1, 3);
  const auto res = simulate_layer(arch_of(1, 1), c.layer, c.ifmaps, c.filters);
  EXPECT_TRUE(oracle::same(res.ofmaps, oracle::conv(c.ifmaps, c.filters, 0, 1)));
  EXPECT_EQ(res.ofmaps[0].height(), 6);
}

TEST(Array, ChannelPairSumsAcrossCores) {
  std::mt19937_64 rng(32);
  auto c = random_case(rng, 9, 7, 2, 2, 3);
  const auto res = simulate_layer(arch_of(2, 2), c.layer, c.ifmaps, c.filters);
  EXPECT_TRUE(oracle::same(res.ofmaps, oracle::conv(c.ifmaps, c.filters, 0, 1)));
  EXPECT_EQ(res.audits.size(), 1u);
  EXPECT_EQ(res.counters.psum_spill_writes, 0u);
}

TEST(Array, SpillAcrossChannelGroups) {
  std::mt19937_64 rng(33);
  auto c = random_case(rng, 7, 7, 5, 3, 3, 1);
  const auto res = simulate_layer(arch_of(2, 2), c.layer, c.ifmaps, c.filters);
  EXPECT_TRUE(oracle::same(res.ofmaps, oracle::conv(c.ifmaps, c.filters, 1, 1)));
  // 3 channel groups: two spill writes and two spill reads per output.
  EXPECT_EQ(res.counters.psum_spill_writes, 2u * 3 * 49);
  EXPECT_EQ(res.counters.psum_spill_reads, 2u * 3 * 49);
  EXPECT_EQ(res.counters.ofmap_writes, 3u * 49);
}

TEST(Array, KernelTilingOnFourCores) {
  std::mt19937_64 rng(34);
  for (int k : {4, 5, 7}) {
    auto c = random_case(rng, 10, 9, 1, 2, k);
    const auto res = simulate_layer(arch_of(4, 2), c.layer, c.ifmaps, c.filters);
    EXPECT_TRUE(oracle::same(res.ofmaps, oracle::conv(c.ifmaps, c.filters, 0, 1))) << "K=" << k;
  }
}

TEST(Array, NarrowAndPaddedShapes) {
  std::mt19937_64 rng(35);
  for (int w : {3, 4, 5, 6}) {
    for (int pad : {0, 1}) {
      if (w + 2 * pad < 3) continue;
      auto c = random_case(rng, w, 6, 1, 1, 3, pad);
      const auto res = simulate_layer(arch_of(1, 1), c.layer, c.ifmaps, c.filters);
      EXPECT_TRUE(oracle::same(res.ofmaps, oracle::conv(c.ifmaps, c.filters, pad, 1))) << w << "/" << pad;
    }
  }
}

TEST(Array, RejectsStrideAndForeignPlans) {
  ArrayOrchestrator arr(arch_of(1, 1));
  const auto l = make_layer_config(9, 9, 1, 1, 3, 2, 0);
  const auto plan = plan_tiling(l, arch_of(1, 1), PlanTarget::Analytics);
  std::mt19937_64 rng(1);
  EXPECT_EQ(code_of([&] { arr.run_layer(l, random_ifmaps(1, 9, 9, rng), random_filters(1, 1, 3, rng), plan); }),
            ErrorCode::UnsupportedStrideForSim);
  const auto l1 = make_layer_config(9, 9, 1, 1, 3, 1, 0);
  const auto other = plan_tiling(l1, arch_of(2, 1));
  EXPECT_EQ(code_of([&] { arr.run_layer(l1, random_ifmaps(1, 9, 9, rng), random_filters(1, 1, 3, rng), other); }),
            ErrorCode::PlanMismatch);
  const auto good = plan_tiling(l1, arch_of(1, 1));
  EXPECT_EQ(code_of([&] { arr.run_layer(l1, random_ifmaps(1, 8, 9, rng), random_filters(1, 1, 3, rng), good); }),
            ErrorCode::ShapeMismatch);
}

TEST(Array, RowWiderThanBuffer) {
  ArchConfig a = arch_of(1, 1);
  a.buffer_capacity = 10;
  const auto l = make_layer_config(12, 5, 1, 1, 3, 1, 0);
  std::mt19937_64 rng(1);
  EXPECT_EQ(code_of([&] { simulate_layer(a, l, random_ifmaps(1, 5, 12, rng), random_filters(1, 1, 3, rng)); }),
            ErrorCode::IfmapTooWide);
}

TEST(Array, PhasesFollowTheSchedule) {
  ArrayOrchestrator arr(arch_of(1, 1));
  const auto l = make_layer_config(8, 8, 1, 2, 3, 1, 0);
  ArchConfig a = arch_of(1, 1);
  std::mt19937_64 rng(2);
  arr.begin_layer(l, random_ifmaps(1, 8, 8, rng), random_filters(2, 1, 3, rng), plan_tiling(l, a));
  std::vector<Phase> seen;
  while (arr.running()) {
    const auto ev = arr.step_cycle();
    if (ev.local_cycle < 3) {
      EXPECT_EQ(ev.phase, Phase::WeightLoad);
    }
    if (seen.empty() || seen.back() != ev.phase) seen.push_back(ev.phase);
  }
  EXPECT_EQ(arr.phase().phase, Phase::Idle);
  EXPECT_EQ(seen.front(), Phase::WeightLoad);
  EXPECT_EQ(seen.back(), Phase::Drain);
  EXPECT_EQ(std::count(seen.begin(), seen.end(), Phase::WeightLoad), 2);
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_TRUE(legal_transition(seen[i - 1], seen[i]));
  const auto res = arr.finish();
  EXPECT_EQ(res.cycles, 2u * (6 * 6 + 7));
  EXPECT_EQ(code_of([&] { arr.step_cycle(); }), ErrorCode::WrongPhase);
}

TEST(Array, SteadyCyclesFetchOncePerCore) {
  std::mt19937_64 rng(36);
  auto c = random_case(rng, 12, 10, 3, 2, 3);
  RunOptions opt;
  opt.record_events = true;
  const auto res = simulate_layer(arch_of(3, 2), c.layer, c.ifmaps, c.filters, opt);
  int steady = 0;
  for (const auto& ev : res.events) {
    if (ev.phase != Phase::Steady) continue;
    ++steady;
    for (int n : ev.ext_fetches) EXPECT_EQ(n, 1) << "cycle " << ev.cycle;
    for (int n : ev.slice_commits) EXPECT_EQ(n, 1) << "cycle " << ev.cycle;
  }
  EXPECT_GT(steady, 0);
}

TEST(Array, SingleFetchAudit) {
  std::mt19937_64 rng(37);
  for (int pad : {0, 1}) {
    auto c = random_case(rng, 11, 9, 4, 3, 3, pad);
    const auto res = simulate_layer(arch_of(2, 2), c.layer, c.ifmaps, c.filters);
    for (const auto& a : res.audits) {
      EXPECT_TRUE(a.single_fetch()) << "pass " << a.pass;
      EXPECT_EQ(a.reads, 2u * 11 * 9);
    }
  }
}

TEST(Array, ShadowOffRefetchesRowEnds) {
  std::mt19937_64 rng(38);
  for (int n : {8, 12, 16}) {
    auto c = random_case(rng, n, n, 1, 1, 3);
    const auto on = simulate_layer(arch_of(1, 1, true), c.layer, c.ifmaps, c.filters);
    const auto off = simulate_layer(arch_of(1, 1, false), c.layer, c.ifmaps, c.filters);
    EXPECT_EQ(on.counters.ifmap_reads, oracle::channel_reads(n, n, 3, true));
    EXPECT_EQ(off.counters.ifmap_reads, oracle::channel_reads(n, n, 3, false));
    EXPECT_EQ(on.ofmaps, off.ofmaps);
    EXPECT_GT(off.audits[0].rereads, 0u);
  }
  EXPECT_EQ(oracle::channel_reads(8, 8, 3, false), 84u);
  EXPECT_EQ(oracle::channel_reads(12, 12, 3, false), 180u);
}

TEST(Array, Deterministic) {
  std::mt19937_64 rng(39);
  auto c = random_case(rng, 9, 9, 2, 2, 3, 1);
  RunOptions opt;
  opt.record_events = true;
  opt.trace_window = CycleWindow{0, 1000};
  const auto a = simulate_layer(arch_of(2, 1), c.layer, c.ifmaps, c.filters, opt);
  const auto b = simulate_layer(arch_of(2, 1), c.layer, c.ifmaps, c.filters, opt);
  EXPECT_EQ(a.counters, b.counters);
  EXPECT_EQ(a.cycles, b.cycles);
  EXPECT_EQ(dump_trace(a.trace), dump_trace(b.trace));
}

TEST(Array, BroadcastWithinCore) {
  std::mt19937_64 rng(40);
  auto c = random_case(rng, 8, 8, 1, 3, 3);
  ArrayOrchestrator arr(arch_of(1, 3));
  arr.begin_layer(c.layer, c.ifmaps, c.filters, plan_tiling(c.layer, arch_of(1, 3)));
  while (arr.running()) {
    arr.step_cycle();
    if (!arr.running()) break;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) {
        EXPECT_EQ(arr.slice(0, 1).pe(r, col).act_reg, arr.slice(0, 0).pe(r, col).act_reg);
        EXPECT_EQ(arr.slice(0, 2).pe(r, col).act_reg, arr.slice(0, 0).pe(r, col).act_reg);
      }
  }
}

TEST(Walkthrough, DiagonalShiftAtCycle7) {
  RunOptions opt;
  opt.trace_window = CycleWindow{0, 64};
  const auto res = walkthrough(opt);
  EXPECT_EQ(res.trace.header.reference_offset, 2);
  const auto& rec = at_ref(res.trace, 7);
  for (int c = 0; c < 3; ++c) {
    const auto& cell = rec.cores[0].grid[static_cast<std::size_t>(c)];
    ASSERT_TRUE(cell.act);
    EXPECT_EQ(cell.act->value, 9 + c);
    EXPECT_EQ(cell.source, Source::DiagonalShift);
  }
}

TEST(Walkthrough, ShadowBankFillsDuringCycles6To8) {
  RunOptions opt;
  opt.trace_window = CycleWindow{0, 64};
  const auto res = walkthrough(opt);
  EXPECT_TRUE(shadow_values(at_ref(res.trace, 5).cores[0]).empty());
  EXPECT_EQ(shadow_values(at_ref(res.trace, 8).cores[0]), (std::multiset<int>{15, 16, 23, 24}));
  std::multiset<int> captured;
  for (int ref = 6; ref <= 8; ++ref)
    for (const auto& cap : at_ref(res.trace, ref).events.shadow_captures)
      captured.insert(at_ref(res.trace, 8).cores[0].shadow[static_cast<std::size_t>(cap.bank_row)]
                          [static_cast<std::size_t>(cap.slot)]->value);
  EXPECT_EQ(captured, (std::multiset<int>{15, 16, 23, 24}));
}

TEST(Walkthrough, RestoresDuringCycles11To13) {
  RunOptions opt;
  opt.trace_window = CycleWindow{0, 64};
  const auto res = walkthrough(opt);
  auto pe = [&](int ref, int r, int c) { return at_ref(res.trace, ref).cores[0].grid[static_cast<std::size_t>(r * 3 + c)]; };
  EXPECT_EQ(pe(11, 0, 2).act->value, 15);
  EXPECT_EQ(pe(11, 0, 2).source, Source::DiagonalShadow);
  EXPECT_EQ(pe(12, 0, 2).act->value, 16);
  EXPECT_EQ(pe(12, 1, 2).act->value, 23);
  EXPECT_EQ(pe(13, 1, 2).act->value, 24);
  EXPECT_EQ(pe(13, 1, 2).source, Source::DiagonalShadow);
  const auto& s13 = at_ref(res.trace, 13).cores[0].shadow;
  EXPECT_EQ(s13[0][0]->value, 23);
  EXPECT_EQ(s13[0][1]->value, 24);
}

TEST(Walkthrough, DumpFormat) {
  RunOptions opt;
  opt.trace_window = CycleWindow{8, 16};
  const auto res = walkthrough(opt);
  const auto text = dump_trace(res.trace, 9, 10);
  EXPECT_NE(text.find("    9d   10d   11d"), std::string::npos) << text;
  EXPECT_NE(text.find("ref 7"), std::string::npos);
  const auto header_only = dump_trace(res.trace, 9, 9);
  EXPECT_EQ(header_only.find("cycle 9"), std::string::npos);
  EXPECT_EQ(code_of([&] { dump_trace(res.trace, 0, 10); }), ErrorCode::RangeError);
  EXPECT_EQ(code_of([&] { dump_trace(res.trace, 12, 11); }), ErrorCode::RangeError);

  RunOptions early;
  early.trace_window = CycleWindow{3, 4};
  EXPECT_NE(dump_trace(walkthrough(early).trace).find("    X     X     X "), std::string::npos);
}
