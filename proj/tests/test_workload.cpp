#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "trim3d/workload.hpp"

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

}  // namespace

TEST(LayerConfig, DerivesOutputDims) {
  const auto valid = make_layer_config(8, 8, 1, 1, 3, 1, 0);
  EXPECT_EQ(valid.out_height, 6);
  EXPECT_EQ(valid.out_width, 6);
  const auto same = make_layer_config(224, 224, 3, 64, 3, 1, 1);
  EXPECT_EQ(same.out_height, 224);
  const auto alex = make_layer_config(227, 227, 3, 96, 11, 4, 0);
  EXPECT_EQ(alex.out_width, 55);
  EXPECT_EQ(make_layer_config(10, 7, 2, 2, 3, 1, 0).out_width, 8);
  EXPECT_EQ(make_layer_config(10, 7, 2, 2, 3, 1, 0).out_height, 5);
}

TEST(LayerConfig, RejectsBadShapes) {
  EXPECT_EQ(code_of([] { make_layer_config(0, 8, 1, 1, 3, 1, 0); }), ErrorCode::NonPositiveDim);
  EXPECT_EQ(code_of([] { make_layer_config(8, 8, 1, 0, 3, 1, 0); }), ErrorCode::NonPositiveDim);
  EXPECT_EQ(code_of([] { make_layer_config(8, 8, 1, 1, 3, 1, -1); }), ErrorCode::NonPositiveDim);
  EXPECT_EQ(code_of([] { make_layer_config(2, 2, 1, 1, 3, 1, 0); }), ErrorCode::KernelLargerThanPaddedIfmap);
  EXPECT_NO_THROW(make_layer_config(2, 2, 1, 1, 3, 1, 1));
  EXPECT_EQ(code_of([] { make_layer_config(8, 8, 1, 1, 3, 2, 0); }), ErrorCode::StrideIndivisible);
}

TEST(LayerConfig, Label) { EXPECT_EQ(make_layer_config(56, 56, 128, 256, 3, 1, 1).label(), "(56,128,256,3)"); }

TEST(Topologies, Vgg16HasThirteenSamePaddedLayers) {
  const auto v = vgg16_layers();
  ASSERT_EQ(v.size(), 13u);
  for (const auto& l : v) {
    EXPECT_EQ(l.kernel_size, 3);
    EXPECT_EQ(l.out_width, l.ifmap_width);
  }
  EXPECT_EQ(v.front().label(), "(224,3,64,3)");
  EXPECT_EQ(v.back().label(), "(14,512,512,3)");
}

TEST(Topologies, AlexNet) {
  const auto a = alexnet_layers();
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0].kernel_size, 11);
  EXPECT_EQ(a[0].stride, 4);
  EXPECT_EQ(a[1].out_width, 27);
  EXPECT_EQ(code_of([] { topology_by_name("resnet"); }), ErrorCode::UsageError);
}

TEST(LayerTable, RoundTrips) {
  std::stringstream ss;
  write_layer_table(ss, alexnet_layers());
  EXPECT_EQ(read_layer_table(ss), alexnet_layers());

  std::istringstream bad("8 8 1 1 3\n");
  EXPECT_EQ(code_of([&] { read_layer_table(bad); }), ErrorCode::UsageError);
  std::istringstream words("8 8 one 1 3 1 0\n");
  EXPECT_EQ(code_of([&] { read_layer_table(words); }), ErrorCode::UsageError);
  std::istringstream comments("# header\n\n8 8 1 1 3 1 0 # toy\n");
  EXPECT_EQ(read_layer_table(comments).size(), 1u);
}

TEST(Tiling, ThreeByThreeIsOneTile) {
  ArchConfig arch;
  const auto plan = plan_tiling(make_layer_config(8, 8, 3, 20, 3, 1, 0), arch);
  EXPECT_EQ(plan.kernel_tiles, 1);
  EXPECT_EQ(plan.channel_groups, 1);
  EXPECT_EQ(plan.filter_groups, 3);
  EXPECT_EQ(plan.passes, 3);
  EXPECT_EQ(plan.schedule.back().filter_count, 4);
}

TEST(Tiling, FiveByFiveUsesFourSubKernels) {
  ArchConfig arch;
  arch.cores = 4;
  arch.slices_per_core = 1;
  const auto plan = plan_tiling(make_layer_config(9, 9, 1, 1, 5, 1, 0), arch);
  EXPECT_EQ(plan.kernel_tiles, 4);
  const std::vector<SubKernel> want = {{0, 0}, {0, 3}, {3, 0}, {3, 3}};
  EXPECT_EQ(plan.sub_kernel_map, want);
  ASSERT_EQ(plan.passes, 1);
  EXPECT_EQ(plan.schedule[0].units.size(), 4u);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(plan.schedule[0].units[static_cast<std::size_t>(t)].tile, t);
}

TEST(Tiling, EveryUnitFilterPairAppearsOnce) {
  for (int c : {1, 3, 8, 11}) {
    for (int f : {1, 5, 8, 17}) {
      for (int k : {3, 5, 7}) {
        ArchConfig arch;
        arch.cores = 4;
        arch.slices_per_core = 3;
        const auto plan = plan_tiling(make_layer_config(12, 12, c, f, k, 1, 0), arch);
        const int tiles = ((k + 2) / 3) * ((k + 2) / 3);
        EXPECT_EQ(plan.passes, ((c * tiles + 3) / 4) * ((f + 2) / 3));
        std::set<std::tuple<int, int, int>> seen;
        for (const auto& p : plan.schedule) {
          EXPECT_LE(static_cast<int>(p.units.size()), arch.cores);
          EXPECT_LE(p.filter_count, arch.slices_per_core);
          for (const auto& u : p.units)
            for (int j = 0; j < p.filter_count; ++j)
              EXPECT_TRUE(seen.insert({u.channel, u.tile, p.filter_base + j}).second);
        }
        EXPECT_EQ(static_cast<int>(seen.size()), c * tiles * f);
      }
    }
  }
}

TEST(Tiling, SimulatorNeedsStrideOne) {
  ArchConfig arch;
  const auto l = alexnet_layers()[0];
  EXPECT_EQ(code_of([&] { plan_tiling(l, arch); }), ErrorCode::UnsupportedStrideForSim);
  EXPECT_NO_THROW(plan_tiling(l, arch, PlanTarget::Analytics));
}

TEST(Tiling, PaddedTilesReassembleKernel) {
  std::mt19937_64 rng(4);
  for (int k : {4, 5, 7}) {
    const auto kernel = random_tensor(k, k, rng);
    const auto tiles = pad_kernel_tiles(kernel, 3);
    const int per = (k + 2) / 3;
    ASSERT_EQ(static_cast<int>(tiles.size()), per * per);
    for (int r = 0; r < per * 3; ++r) {
      for (int c = 0; c < per * 3; ++c) {
        const auto& t = tiles[static_cast<std::size_t>((r / 3) * per + c / 3)];
        const int want = (r < k && c < k) ? kernel(r, c) : 0;
        EXPECT_EQ(t(r % 3, c % 3), want);
      }
    }
  }
}

TEST(Arch, Validation) {
  ArchConfig a;
  EXPECT_EQ(a.pe_count(), 576);
  a.cores = 0;
  EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::InvalidArch);
  ArchConfig b;
  b.clock_hz = 0;
  EXPECT_EQ(code_of([&] { b.validate(); }), ErrorCode::InvalidArch);
}
