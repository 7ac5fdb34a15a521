#pragma once

// Surface distance, image similarity and the per-frame evaluation of a
// fitted velocity field.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perimotion/geometry.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/velocity_field.hpp"
#include "perimotion/volume.hpp"

namespace perimotion {

// Closest point on triangle abc to p (Voronoi-region walk).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Bounding-volume hierarchy over a mesh's triangles for exact
// point-to-surface distance queries.
class TriangleDistanceIndex {
 public:
  explicit TriangleDistanceIndex(const TriangleMesh& mesh);
  ~TriangleDistanceIndex();
  TriangleDistanceIndex(TriangleDistanceIndex&&) noexcept;
  TriangleDistanceIndex& operator=(TriangleDistanceIndex&&) noexcept;

  double distance(const Vec3& p) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Linear scan over all triangles.
double point_surface_distance_brute_force(const Vec3& p, const TriangleMesh& mesh);

// max over vertices of `from` of the distance to the surface of `to`.
double directed_hausdorff(const TriangleMesh& from, const TriangleMesh& to);
double directed_hausdorff_brute_force(const TriangleMesh& from, const TriangleMesh& to);

// Symmetric vertex-to-surface Hausdorff distance. Throws DataError when
// either mesh has no vertices or no faces.
double hausdorff(const TriangleMesh& a, const TriangleMesh& b);
double hausdorff_brute_force(const TriangleMesh& a, const TriangleMesh& b);

// 10 log10(peak^2 / MSE) with peak = max(reference). Returns +infinity when
// the frames are identical. Throws ContractError on shape mismatch and
// DataError when the reference is all zero.
double psnr(const Grid3& image, const Grid3& reference);

double pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct EvalConfig {
  int steps_per_frame = 1;
  // Every psnr_stride-th voxel along each axis enters the PSNR.
  int psnr_stride = 1;
  std::size_t periodicity_probes = 1000;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct FrameEval {
  std::size_t frame = 0;
  double t = 0.0;
  std::optional<double> hsd_mm;  // empty when no reference mesh exists
  double psnr_db = 0.0;
  double volume_mm3 = 0.0;
  std::optional<double> reference_volume_mm3;
};

struct EvalReport {
  std::vector<FrameEval> frames;
  std::size_t hsd_frame_count = 0;
  double mean_hsd_mm = std::numeric_limits<double>::quiet_NaN();
  double max_hsd_mm = std::numeric_limits<double>::quiet_NaN();
  double mean_psnr_db = std::numeric_limits<double>::quiet_NaN();  // finite frames only
  double periodicity_error_mm = 0.0;
  std::string psnr_peak = "reference_max";

  std::vector<double> volume_curve() const;
};

// Deforms reference_meshes[0] to every frame time, scores it against every
// reference mesh that is present, measures enclosed volumes, compares the
// frame-0 image pulled back along the flow with each frame, and reports the
// mean world-space distance |P - phi_T(P)| over random probes.
EvalReport evaluate_fit(const VelocityField& field, const Volume4D& volume,
                        std::span<const std::optional<TriangleMesh>> reference_meshes, const EvalConfig& config = {});

// frame,t,hsd_mm,psnr_db,volume_mm3; missing values are empty fields and
// +infinity PSNR is written as "inf".
void write_eval_csv(const EvalReport& report, std::ostream& out);
std::string eval_summary_json(const EvalReport& report);

}  // namespace perimotion
