// Micro benchmarks for the hot paths of a fit and an evaluation.
// Run: ./perimotion_bench --benchmark_filter=Affine

#include <benchmark/benchmark.h>

#include <vector>

#include "perimotion/autodiff.hpp"
#include "perimotion/flow.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/metrics.hpp"
#include "perimotion/neural_field.hpp"
#include "perimotion/random.hpp"
#include "perimotion/training.hpp"
#include "perimotion/volume.hpp"

using namespace perimotion;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> out(n);
  for (Vec3& p : out) {
    const double x = rng.uniform(-1, 1);
    const double y = rng.uniform(-1, 1);
    const double z = rng.uniform(-1, 1);
    p = Vec3(x, y, z);
  }
  return out;
}

ad::Array<float> random_array(std::size_t r, std::size_t c, Rng& rng) {
  ad::Array<float> a(r, c);
  for (float& v : a.data) v = static_cast<float>(rng.uniform(-1, 1));
  return a;
}

FieldArchitecture arch_of_width(int width) {
  FieldArchitecture a;
  a.hidden_width = width;
  return a;
}

}  // namespace

// rows x 128 -> 128 affine + sine, forward and backward
static void BM_AffineSinForwardBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const ad::Array<float> x = random_array(rows, 128, rng);
  const ad::Array<float> w = random_array(128, 128, rng);
  const ad::Array<float> b = random_array(1, 128, rng);
  ad::Tape<float> tape;
  for (auto _ : state) {
    tape.clear();
    auto wv = tape.leaf(w);
    auto root = ad::sum(ad::sin_activation(ad::affine(tape.constant(x), wv, tape.leaf(b)), 6.0f));
    tape.backward(root);
    benchmark::DoNotOptimize(tape.grad(wv).data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_AffineSinForwardBackward)->Arg(256)->Arg(2000);

static void BM_FieldEvaluate(benchmark::State& state) {
  const VelocityFieldModel model = VelocityFieldModel::initialize(arch_of_width(static_cast<int>(state.range(0))), 3);
  const std::vector<Vec3> pts = random_points(2000, 2);
  std::vector<Vec3> v(pts.size());
  for (auto _ : state) {
    model.evaluate(pts, 0.3, v);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_FieldEvaluate)->Arg(128)->Arg(256);

// 24 Euler steps through a width-128 field, value path
static void BM_EulerIntegrate(benchmark::State& state) {
  const VelocityFieldModel model = VelocityFieldModel::initialize(arch_of_width(128), 4);
  const std::vector<Vec3> seeds = random_points(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) {
    const Trajectory traj = integrate(model, seeds, 0.0, 1.0, 24);
    benchmark::DoNotOptimize(traj.final_positions().data());
  }
}
BENCHMARK(BM_EulerIntegrate)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_TrilinearSample(benchmark::State& state) {
  Grid3 g({48, 48, 48});
  Rng rng(6);
  for (float& v : g.values) v = static_cast<float>(rng.uniform());
  const std::vector<Vec3> pts = random_points(4096, 7);
  for (auto _ : state) {
    double acc = 0.0;
    for (const Vec3& p : pts) acc += sample_trilinear(g, p).value;
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_TrilinearSample);

static void BM_Hausdorff(benchmark::State& state) {
  const int sub = static_cast<int>(state.range(0));
  const TriangleMesh a = make_icosphere(10.0, sub);
  const TriangleMesh b = make_icosphere(12.0, sub, Vec3(0.5, 0.0, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(hausdorff(a, b));
}
BENCHMARK(BM_Hausdorff)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_HausdorffBruteForce(benchmark::State& state) {
  const TriangleMesh a = make_icosphere(10.0, 3);
  const TriangleMesh b = make_icosphere(12.0, 3, Vec3(0.5, 0.0, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(hausdorff_brute_force(a, b));
}
BENCHMARK(BM_HausdorffBruteForce)->Unit(benchmark::kMillisecond);

// One optimization epoch on a 25-frame 48^3 sphere
static void BM_FitEpoch(benchmark::State& state) {
  const SphereSeries s =
      make_sphere_series(GrowthPattern{GrowthKind::periodic, 12.0, 4.0}, GridSpec{}, 25, 2.0, 1);
  FitConfig cfg;
  cfg.epochs = 1;
  cfg.points_per_epoch = 2000;
  cfg.hidden_width = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(s.volume, cfg).report.history.back().total);
}
BENCHMARK(BM_FitEpoch)->Arg(128)->Unit(benchmark::kMillisecond)->Iterations(3);

BENCHMARK_MAIN();
