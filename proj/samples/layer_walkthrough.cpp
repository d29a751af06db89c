// Runs the 8x8 ramp layer through a single slice, prints the cycles around the
// first window-row transition, then checks a random multi-channel layer
// against the golden convolution and the access model.

#include <iostream>

#include "trim3d/trim3d.hpp"

int main() {
  using namespace trim3d;

  const auto toy = make_layer_config(8, 8, 1, 1, 3, 1, 0);
  ArchConfig single;
  single.cores = 1;
  single.slices_per_core = 1;
  RunOptions opt;
  opt.trace_window = CycleWindow{8, 16};
  const auto run = simulate_layer(single, toy, ramp_ifmaps(toy), {{TensorW(3, 3, Weight{1})}}, opt);
  std::cout << dump_trace(run.trace) << '\n';

  const auto layer = make_layer_config(14, 14, 6, 5, 3, 1, 1);
  std::mt19937_64 rng(2024);
  auto ifmaps = random_ifmaps(layer.in_channels, layer.ifmap_height, layer.ifmap_width, rng);
  auto filters = random_filters(layer.num_filters, layer.in_channels, layer.kernel_size, rng);
  const auto golden = golden_layer(layer, ifmaps, filters);

  ArchConfig arch;
  arch.cores = 4;
  arch.slices_per_core = 2;
  const auto res = simulate_layer(arch, layer, std::move(ifmaps), std::move(filters));
  const auto model = model_counters(layer, arch, AccessMode::ThreeD);

  std::cout << "layer " << layer.label() << ": " << res.cycles << " cycles, " << res.counters.ifmap_reads
            << " ifmap reads (model " << model.ifmap_reads << "), golden "
            << (res.ofmaps == golden ? "match" : "MISMATCH") << '\n';
  return res.ofmaps == golden && res.counters == model ? 0 : 1;
}
