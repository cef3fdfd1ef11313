#include <benchmark/benchmark.h>

#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/geometry.hpp"
#include "dlab/nn.hpp"
#include "dlab/objectives.hpp"
#include "dlab/projection.hpp"
#include "dlab/rng.hpp"

namespace {

dlab::HierarchySpec bench_spec() {
  dlab::HierarchySpec spec;
  spec.samples_per_class_train = 40;
  spec.samples_per_class_val = 10;
  return spec;
}

dlab::FeatureMatrix bench_features(double tag, std::uint64_t seed) {
  dlab::Rng rng(seed);
  dlab::FeatureMatrix f;
  f.num_classes = 8;
  f.temperature_tag = tag;
  f.rows = dlab::Matrix(320, 16);
  f.labels.resize(320);
  for (std::size_t i = 0; i < 320; ++i) {
    f.labels[i] = static_cast<int>(i % 8);
    for (std::size_t d = 0; d < 16; ++d) {
      f.rows(i, d) = 2.0 * f.labels[i] + rng.gaussian();
    }
  }
  return f;
}

void BM_tempered_softmax(benchmark::State& state) {
  dlab::Rng rng(7);
  std::vector<double> logits(200);
  for (double& z : logits) {
    z = rng.gaussian() * 3.0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dlab::tempered_softmax(logits, 4.0));
  }
}
BENCHMARK(BM_tempered_softmax);

void BM_forward_backward(benchmark::State& state) {
  dlab::NetworkParams net = dlab::init_network({16, 32, 16, 8}, 3);
  dlab::Rng rng(11);
  std::vector<double> input(16);
  for (double& v : input) {
    v = rng.gaussian();
  }
  std::vector<double> grad_logits(8, 0.125);
  for (auto _ : state) {
    const dlab::ForwardTrace trace = dlab::forward(net, input);
    dlab::Gradients grads = dlab::backward(net, trace, grad_logits);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_forward_backward);

void BM_diffusion_centroid(benchmark::State& state) {
  const dlab::FeatureMatrix f1 = bench_features(1.0, 5);
  const dlab::FeatureMatrix f2 = bench_features(4.0, 6);
  const dlab::SemanticSets sets{0, {1, 2, 3}, {4, 5, 6, 7}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dlab::diffusion_index(f1, f2, sets, dlab::SetSide::Similar));
  }
}
BENCHMARK(BM_diffusion_centroid);

void BM_diffusion_pairwise(benchmark::State& state) {
  const dlab::FeatureMatrix f1 = bench_features(1.0, 5);
  const dlab::FeatureMatrix f2 = bench_features(4.0, 6);
  const dlab::SemanticSets sets{0, {1, 2, 3}, {4, 5, 6, 7}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dlab::diffusion_index_pairwise(f1, f2, sets, dlab::SetSide::Similar));
  }
}
BENCHMARK(BM_diffusion_pairwise);

void BM_pca_2d(benchmark::State& state) {
  dlab::Rng rng(9);
  dlab::Matrix points(600, 3);
  for (std::size_t i = 0; i < 600; ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      points(i, d) = rng.gaussian() * (d + 1.0);
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dlab::pca_2d(points, {}));
  }
}
BENCHMARK(BM_pca_2d);

void BM_generate(benchmark::State& state) {
  const dlab::HierarchySpec spec = bench_spec();
  for (auto _ : state) {
    benchmark::DoNotOptimize(dlab::generate(spec));
  }
}
BENCHMARK(BM_generate);

}  // namespace

BENCHMARK_MAIN();
