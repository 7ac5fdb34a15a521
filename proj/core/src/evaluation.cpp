#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <string>
#include <thread>

#include "perimotion/errors.hpp"
#include "perimotion/flow.hpp"
#include "perimotion/metrics.hpp"
#include "perimotion/random.hpp"

namespace perimotion {

std::vector<double> EvalReport::volume_curve() const {
  std::vector<double> v;
  v.reserve(frames.size());
  for (const FrameEval& f : frames) v.push_back(f.volume_mm3);
  return v;
}

namespace {

// Runs fn(i) for i in [0, n); results land in caller-owned slots so the
// outcome does not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t k = 0; k < w; ++k) {
    threads.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += w) fn(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct StridedGrid {
  GridShape shape{};
  std::vector<std::array<std::size_t, 3>> voxels;
};

StridedGrid strided_voxels(const GridShape& full, int stride) {
  StridedGrid g;
  const auto s = static_cast<std::size_t>(stride);
  for (std::size_t a = 0; a < 3; ++a) g.shape[a] = (full[a] + s - 1) / s;
  g.voxels.reserve(g.shape[0] * g.shape[1] * g.shape[2]);
  for (std::size_t k = 0; k < full[2]; k += s) {
    for (std::size_t j = 0; j < full[1]; j += s) {
      for (std::size_t i = 0; i < full[0]; i += s) g.voxels.push_back({i, j, k});
    }
  }
  return g;
}

}  // namespace

EvalReport evaluate_fit(const VelocityField& field, const Volume4D& volume,
                        std::span<const std::optional<TriangleMesh>> reference_meshes, const EvalConfig& config) {
  volume.validate();
  if (config.steps_per_frame < 1) throw ContractError("evaluate_fit: steps_per_frame must be >= 1");
  if (config.psnr_stride < 1) throw ContractError("evaluate_fit: psnr_stride must be >= 1");
  const std::size_t n = volume.frame_count();
  if (reference_meshes.size() != n) {
    throw ContractError("evaluate_fit: expected one (possibly empty) reference mesh slot per frame");
  }
  if (!reference_meshes[0] || reference_meshes[0]->empty()) {
    throw DataError("evaluate_fit: the frame-0 reference mesh is required");
  }

  const DomainNormalizer normalizer = DomainNormalizer::for_volume(volume);
  const TriangleMesh& initial = *reference_meshes[0];

  std::vector<Vec3> seeds;
  seeds.reserve(initial.vertices.size());
  for (const Vec3& v : initial.vertices) seeds.push_back(normalizer.to_normalized(v));
  const Trajectory mesh_flow = flow_at_frames(field, seeds, volume.frame_times, config.steps_per_frame);

  const StridedGrid strided = strided_voxels(volume.shape, config.psnr_stride);
  std::vector<Vec3> voxel_points;
  voxel_points.reserve(strided.voxels.size());
  for (const auto& ijk : strided.voxels) {
    const Vec3 world = volume.origin_mm + Vec3(static_cast<double>(ijk[0]), static_cast<double>(ijk[1]),
                                               static_cast<double>(ijk[2]))
                                              .cwiseProduct(volume.spacing_mm);
    voxel_points.push_back(normalizer.to_normalized(world));
  }

  EvalReport report;
  report.frames.resize(n);
  parallel_for(n, config.workers, [&](std::size_t i) {
    FrameEval& fe = report.frames[i];
    fe.frame = i;
    fe.t = volume.frame_times[i];

    TriangleMesh predicted{{}, initial.faces};
    predicted.vertices.reserve(seeds.size());
    const auto moved = mesh_flow.step(i);
    for (std::size_t v = 0; v < seeds.size(); ++v) {
      predicted.vertices.push_back(initial.vertices[v] + (moved[v] - seeds[v]).cwiseProduct(normalizer.half_extent()));
    }
    fe.volume_mm3 = mesh_volume(predicted);
    if (reference_meshes[i] && !reference_meshes[i]->empty()) {
      fe.hsd_mm = hausdorff(predicted, *reference_meshes[i]);
      fe.reference_volume_mm3 = mesh_volume(*reference_meshes[i]);
    }

    const int steps = static_cast<int>(i) * config.steps_per_frame;
    const std::vector<Vec3> pulled =
        i == 0 ? voxel_points : inverse_map(field, voxel_points, fe.t, steps);
    Grid3 warped(strided.shape);
    Grid3 reference(strided.shape);
    for (std::size_t v = 0; v < pulled.size(); ++v) {
      warped.values[v] = static_cast<float>(sample_trilinear(volume.frames[0], pulled[v]).value);
      const auto& ijk = strided.voxels[v];
      reference.values[v] = volume.frames[i].at(ijk[0], ijk[1], ijk[2]);
    }
    fe.psnr_db = psnr(warped, reference);
  });

  double hsd_sum = 0.0;
  double psnr_sum = 0.0;
  std::size_t psnr_count = 0;
  for (const FrameEval& fe : report.frames) {
    if (fe.hsd_mm) {
      ++report.hsd_frame_count;
      hsd_sum += *fe.hsd_mm;
      report.max_hsd_mm = std::isnan(report.max_hsd_mm) ? *fe.hsd_mm : std::max(report.max_hsd_mm, *fe.hsd_mm);
    }
    if (std::isfinite(fe.psnr_db)) {
      psnr_sum += fe.psnr_db;
      ++psnr_count;
    }
  }
  if (report.hsd_frame_count > 0) report.mean_hsd_mm = hsd_sum / static_cast<double>(report.hsd_frame_count);
  if (psnr_count > 0) report.mean_psnr_db = psnr_sum / static_cast<double>(psnr_count);

  if (config.periodicity_probes > 0) {
    Rng rng(config.seed, 0x9e71);
    std::vector<Vec3> probes(config.periodicity_probes);
    for (Vec3& p : probes) {
      const double x = rng.uniform(-1.0, 1.0);
      const double y = rng.uniform(-1.0, 1.0);
      const double z = rng.uniform(-1.0, 1.0);
      p = Vec3(x, y, z);
    }
    const Trajectory cycle = flow_at_frames(field, probes, volume.frame_times, config.steps_per_frame);
    const auto end = cycle.final_positions();
    double sum = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      sum += (end[k] - probes[k]).cwiseProduct(normalizer.half_extent()).norm();
    }
    report.periodicity_error_mm = sum / static_cast<double>(probes.size());
  }
  return report;
}

namespace {

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

nlohmann::ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

void write_eval_csv(const EvalReport& report, std::ostream& out) {
  out << "frame,t,hsd_mm,psnr_db,volume_mm3\n";
  for (const FrameEval& f : report.frames) {
    out << f.frame << ',' << format_value(f.t) << ',' << (f.hsd_mm ? format_value(*f.hsd_mm) : "") << ','
        << format_value(f.psnr_db) << ',' << format_value(f.volume_mm3) << '\n';
  }
}

std::string eval_summary_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["frames"] = report.frames.size();
  j["hsd_frames"] = report.hsd_frame_count;
  j["mean_hsd_mm"] = number_or_null(report.mean_hsd_mm);
  j["max_hsd_mm"] = number_or_null(report.max_hsd_mm);
  j["mean_psnr_db"] = number_or_null(report.mean_psnr_db);
  j["psnr_peak"] = report.psnr_peak;
  j["periodicity_error_mm"] = report.periodicity_error_mm;
  nlohmann::ordered_json missing = nlohmann::ordered_json::array();
  nlohmann::ordered_json predicted = nlohmann::ordered_json::array();
  nlohmann::ordered_json reference = nlohmann::ordered_json::array();
  for (const FrameEval& f : report.frames) {
    if (!f.hsd_mm) missing.push_back(f.frame);
    predicted.push_back(f.volume_mm3);
    reference.push_back(f.reference_volume_mm3 ? nlohmann::ordered_json(*f.reference_volume_mm3)
                                                : nlohmann::ordered_json(nullptr));
  }
  j["frames_without_reference"] = missing;
  j["volume_mm3"] = predicted;
  j["reference_volume_mm3"] = reference;
  return j.dump(2) + "\n";
}

}  // namespace perimotion
