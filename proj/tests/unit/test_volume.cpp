#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "perimotion/errors.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/volume.hpp"

using namespace perimotion;
using perimotion::testing::max_relative_error;
using perimotion::testing::numeric_gradient;

namespace {

Grid3 random_grid(Rng& rng, GridShape s) {
  Grid3 g(s);
  for (float& v : g.values) v = static_cast<float>(rng.uniform());
  return g;
}

Vec3 voxel_to_normalized(const GridShape& s, std::size_t i, std::size_t j, std::size_t k) {
  return Vec3(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(s[0] - 1),
              -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(s[1] - 1),
              -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(s[2] - 1));
}

Volume4D random_volume(Rng& rng, GridShape s, std::size_t frames) {
  Volume4D v;
  v.shape = s;
  v.spacing_mm = Vec3(0.5, 1.25, 2.0);
  v.origin_mm = Vec3(-3.0, 4.5, 0.1);
  v.frame_times = uniform_frame_times(frames);
  for (std::size_t f = 0; f < frames; ++f) v.frames.push_back(random_grid(rng, s));
  return v;
}

}  // namespace

TEST_CASE("radius_at examples") {
  GrowthPattern periodic{GrowthKind::periodic, 12.0, 3.0};
  CHECK(radius_at(periodic, 0.0) == 12.0);
  CHECK(radius_at(periodic, 1.0) == 12.0);
  CHECK(radius_at(periodic, 0.25) == doctest::Approx(15.0).epsilon(1e-14));
  GrowthPattern linear{GrowthKind::linear, 10.0, 0.5};
  CHECK(radius_at(linear, 1.0) == 15.0);
  GrowthPattern expo{GrowthKind::exponential, 10.0, std::log(2.0)};
  CHECK(radius_at(expo, 1.0) == doctest::Approx(20.0).epsilon(1e-14));
  GrowthPattern bad{GrowthKind::periodic, 2.0, 3.0};
  CHECK_THROWS_AS(radius_at(bad, 0.75), ContractError);
}

TEST_CASE("normalizer maps the voxel-centre box onto [-1, 1]^3") {
  Rng rng(1);
  const Volume4D v = random_volume(rng, {5, 7, 9}, 2);
  const DomainNormalizer n = DomainNormalizer::for_volume(v);
  const Vec3 lo = n.to_normalized(v.origin_mm);
  const Vec3 hi = n.to_normalized(v.origin_mm + Vec3(4 * 0.5, 6 * 1.25, 8 * 2.0));
  for (int a = 0; a < 3; ++a) {
    CHECK(lo[a] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(hi[a] == doctest::Approx(1.0).epsilon(1e-15));
  }
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100));
    CHECK((n.to_world(n.to_normalized(w)) - w).norm() < 1e-9);
  }
}

TEST_CASE("trilinear sampling at voxel and cell centres") {
  Rng rng(2);
  const GridShape s{4, 5, 6};
  const Grid3 g = random_grid(rng, s);
  for (std::size_t k = 0; k < s[2]; ++k) {
    for (std::size_t j = 0; j < s[1]; ++j) {
      for (std::size_t i = 0; i < s[0]; ++i) {
        CHECK(sample_trilinear(g, voxel_to_normalized(s, i, j, k)).value == doctest::Approx(g.at(i, j, k)).epsilon(1e-12));
      }
    }
  }
  const Vec3 c = 0.5 * (voxel_to_normalized(s, 1, 2, 3) + voxel_to_normalized(s, 2, 3, 4));
  double mean = 0.0;
  for (int d = 0; d < 8; ++d) mean += g.at(1 + (d & 1), 2 + ((d >> 1) & 1), 3 + ((d >> 2) & 1));
  CHECK(sample_trilinear(g, c).value == doctest::Approx(mean / 8.0).epsilon(1e-12));
}

TEST_CASE("trilinear sampling reproduces affine fields and stays within corner bounds") {
  const GridShape s{6, 6, 6};
  Grid3 g(s);
  auto affine = [](const Vec3& p) { return 0.3 * p.x() - 0.2 * p.y() + 0.1 * p.z() + 0.5; };
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t i = 0; i < 6; ++i) g.at(i, j, k) = static_cast<float>(affine(voxel_to_normalized(s, i, j, k)));
    }
  }
  Rng rng(3);
  for (int n = 0; n < 500; ++n) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK(std::abs(sample_trilinear(g, p).value - affine(p)) < 1e-6);
  }

  const Grid3 r = random_grid(rng, s);
  for (int n = 0; n < 500; ++n) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double u[3] = {(p.x() + 1) * 2.5, (p.y() + 1) * 2.5, (p.z() + 1) * 2.5};
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(u[0]), 4);
    const auto j = std::min<std::size_t>(static_cast<std::size_t>(u[1]), 4);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(u[2]), 4);
    double lo = 1e9, hi = -1e9;
    for (int d = 0; d < 8; ++d) {
      const double c = r.at(i + (d & 1), j + ((d >> 1) & 1), k + ((d >> 2) & 1));
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    const double v = sample_trilinear(r, p).value;
    CHECK(v >= lo - 1e-12);
    CHECK(v <= hi + 1e-12);
  }
}

TEST_CASE("trilinear spatial gradient matches central differences") {
  Rng rng(4);
  const GridShape s{7, 7, 7};
  const Grid3 g = random_grid(rng, s);
  int checked = 0;
  while (checked < 200) {
    const Vec3 p(rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95));
    // stay away from cell faces where the gradient is discontinuous
    bool near_face = false;
    for (int a = 0; a < 3; ++a) {
      const double u = (p[a] + 1.0) * 3.0;
      near_face |= std::abs(u - std::round(u)) < 1e-3;
    }
    if (near_face) continue;
    ++checked;
    const Vec3 analytic = sample_trilinear(g, p).gradient;
    const auto numeric = numeric_gradient(
        [&](std::span<const double> x) { return sample_trilinear(g, Vec3(x[0], x[1], x[2])).value; },
        std::vector<double>{p.x(), p.y(), p.z()}, 1e-4);
    const double a[3] = {analytic.x(), analytic.y(), analytic.z()};
    CHECK(max_relative_error(a, numeric, 1e-6) < 1e-4);
  }
}

TEST_CASE("out-of-bounds sampling clamps with zero gradient along clamped axes") {
  Rng rng(5);
  const Grid3 g = random_grid(rng, {4, 4, 4});
  const TrilinearSample outside = sample_trilinear(g, Vec3(1.7, 0.1, -0.2));
  const TrilinearSample edge = sample_trilinear(g, Vec3(1.0, 0.1, -0.2));
  CHECK(outside.value == edge.value);
  CHECK(outside.gradient.x() == 0.0);
  CHECK(outside.gradient.y() == edge.gradient.y());
  const TrilinearSample corner = sample_trilinear(g, Vec3(-3, -3, -3));
  CHECK(corner.value == doctest::Approx(g.at(0, 0, 0)));
  CHECK(corner.gradient == Vec3::Zero());
}

TEST_CASE("periodic sphere series closes bitwise and tracks analytic volume") {
  GrowthPattern p{GrowthKind::periodic, 8.0, 3.0};
  const SphereSeries s = make_sphere_series(p, GridSpec{{32, 32, 32}, Vec3::Ones()}, 9, 2.0);
  REQUIRE(s.volume.frame_count() == 9);
  CHECK(s.meshes.size() == 9);
  CHECK(std::memcmp(s.volume.frames.front().values.data(), s.volume.frames.back().values.data(),
                    4 * s.volume.frames.front().size()) == 0);
  for (std::size_t i = 0; i < 9; ++i) {
    const double r = p.radius_at(s.volume.frame_times[i]);
    const double exact = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    CHECK(std::abs(mesh_volume(s.meshes[i]) - exact) / exact < 0.02);
  }
}

TEST_CASE("linear growth increases the occupied voxel count monotonically") {
  GrowthPattern p{GrowthKind::linear, 5.0, 0.5};
  const SphereSeries s = make_sphere_series(p, GridSpec{{24, 24, 24}, Vec3::Ones()}, 6, 2.0, 1);
  std::size_t previous = 0;
  for (const Grid3& f : s.volume.frames) {
    const auto count = static_cast<std::size_t>(std::count_if(f.values.begin(), f.values.end(), [](float v) { return v >= 0.5f; }));
    CHECK(count >= previous);
    previous = count;
  }
  const auto first = std::count_if(s.volume.frames.front().values.begin(), s.volume.frames.front().values.end(),
                                   [](float v) { return v >= 0.5f; });
  CHECK(static_cast<std::size_t>(first) < previous);
}

TEST_CASE("sphere generator rejects spheres larger than the grid") {
  GrowthPattern p{GrowthKind::linear, 10.0, 1.0};
  CHECK_THROWS_AS(make_sphere_series(p, GridSpec{{24, 24, 24}, Vec3::Ones()}, 4, 2.0), ContractError);
}

TEST_CASE("V4D round trip is bit-identical") {
  Rng rng(6);
  const Volume4D v = random_volume(rng, {8, 8, 8}, 3);
  std::stringstream a;
  write_v4d(v, a);
  const std::string bytes = a.str();
  const Volume4D back = read_v4d(a);
  CHECK(back.shape == v.shape);
  CHECK(back.spacing_mm == v.spacing_mm);
  CHECK(back.origin_mm == v.origin_mm);
  CHECK(back.frame_times == v.frame_times);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(std::memcmp(back.frames[f].values.data(), v.frames[f].values.data(), 4 * 512) == 0);
  }
  std::stringstream b;
  write_v4d(back, b);
  CHECK(b.str() == bytes);
}

TEST_CASE("V4D corruption") {
  Rng rng(7);
  const Volume4D v = random_volume(rng, {3, 3, 3}, 2);
  std::stringstream a;
  write_v4d(v, a);
  const std::string bytes = a.str();

  std::string bad = bytes;
  bad[5] = '#';
  std::istringstream in(bad);
  try {
    read_v4d(in);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 5);
    CHECK(std::string(e.what()).find("offset 5") != std::string::npos);
  }

  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_v4d(cut), TruncatedError);

  Volume4D unordered = v;
  unordered.frame_times = {0.0, 0.0};
  CHECK_THROWS_AS(unordered.validate(), ValidationError);
  // hand-edit the header of a valid file so the times decrease
  std::string swapped = bytes;
  const auto pos = swapped.find("\"frame_times\":[0.0,1.0]");
  REQUIRE(pos != std::string::npos);
  swapped.replace(pos, 23, "\"frame_times\":[1.0,0.0]");
  std::istringstream in2(swapped);
  CHECK_THROWS_AS(read_v4d(in2), ValidationError);
}
