#pragma once

// Registration objective and its optimization.
//
// The data term compares intensities along forward trajectories: for every
// sampled point P with positions x_i = phi_{t_i}(P),
//
//   data = sum_{i=0}^{N-2} mean_P (I_{t_i}(x_i) - I_T(x_{N-1}))^2
//
// and the cycle term is mean_P |P - phi_T(P)|^2. The total is
// data + lambda * cycle when the cycle term is enabled, data otherwise.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "perimotion/autodiff.hpp"
#include "perimotion/geometry.hpp"
#include "perimotion/neural_field.hpp"
#include "perimotion/volume.hpp"

namespace perimotion {

enum class SamplingStrategy { uniform, foreground };
enum class Precision { f32, f64 };

struct FitConfig {
  double lambda = 1.0;
  int epochs = 1000;
  std::size_t points_per_epoch = 5000;
  double learning_rate = 3e-5;
  std::uint64_t seed = 0;
  double omega = 6.0;
  int steps_per_frame = 1;
  bool time_encoding = true;
  bool cycle_enabled = true;
  SamplingStrategy sampling = SamplingStrategy::uniform;
  int hidden_layers = 3;
  int hidden_width = 256;
  Precision precision = Precision::f32;

  FieldArchitecture architecture() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment. Keys are the FitConfig
// field names. Unknown keys and malformed values throw ConfigError.
FitConfig parse_fit_config(std::istream& in, FitConfig base = {});
FitConfig read_fit_config(const std::filesystem::path& path, FitConfig base = {});
void apply_config_value(FitConfig& config, const std::string& key, const std::string& value);
// Ordered key/value rendering, the inverse of parse_fit_config.
std::vector<std::pair<std::string, std::string>> config_items(const FitConfig& config);
void write_fit_config(const FitConfig& config, std::ostream& out);

// n points in [-1, 1]^3. Uniform: i.i.d. over the cube. Foreground: half of
// the points jittered inside random voxels whose frame-0 intensity exceeds
// 0.1, the rest uniform. Deterministic in seed.
std::vector<Vec3> sample_points(const Volume4D& volume, std::size_t n, SamplingStrategy strategy, std::uint64_t seed);

template <std::floating_point T>
ad::Var<T> points_to_var(ad::Tape<T>& tape, std::span<const Vec3> points);

// Data term from graph positions at each frame time.
template <std::floating_point T>
ad::Var<T> data_loss_from_positions(const Volume4D& volume, std::span<const ad::Var<T>> frame_positions);

// Cycle term from seeds and end-of-cycle positions.
template <std::floating_point T>
ad::Var<T> cycle_loss_from_positions(ad::Var<T> seeds, ad::Var<T> final_positions);

template <std::floating_point T>
ad::Var<T> data_loss(const FieldGraph<T>& field, const Volume4D& volume, std::span<const Vec3> points,
                     int steps_per_frame = 1);

// Full-cycle forward integration over [0, period] with `steps` Euler steps.
template <std::floating_point T>
ad::Var<T> cycle_loss(const FieldGraph<T>& field, std::span<const Vec3> points, int steps);

template <std::floating_point T>
struct ObjectiveTerms {
  ad::Var<T> data;
  ad::Var<T> cycle;  // always computed (diagnostic when not part of total)
  ad::Var<T> total;
};

// Both terms from one shared forward trajectory.
template <std::floating_point T>
ObjectiveTerms<T> objective(const FieldGraph<T>& field, const Volume4D& volume, std::span<const Vec3> points,
                            int steps_per_frame, double lambda, bool cycle_enabled);

struct AdamHyper {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// Bias-corrected Adam update in place.
template <std::floating_point P>
void adam_step(std::span<P> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

struct EpochRecord {
  int epoch = 0;
  double data_loss = 0.0;
  double cycle_loss = 0.0;
  double total = 0.0;
};

struct FitReport {
  FitConfig config;
  std::vector<EpochRecord> history;
  double wall_seconds = 0.0;
  bool lambda_ignored = false;
  std::vector<std::string> warnings;
  std::string checkpoint_path;  // filled in by callers that save the model
};

struct FitResult {
  VelocityFieldModel model;
  FitReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Resamples points each epoch, builds the objective, backpropagates and takes
// one Adam step. Throws NumericalError (index = epoch) on non-finite loss.
FitResult fit(const Volume4D& volume, const FitConfig& config, const EpochCallback& on_epoch = {});

// "epoch,data_loss,cycle_loss,total", one row per epoch, %.9g values.
void write_loss_csv(const FitReport& report, std::ostream& out);
std::vector<EpochRecord> read_loss_csv(std::istream& in);
// JSON summary: config echo, final and first losses, wall time, warnings.
std::string fit_summary_json(const FitReport& report);

}  // namespace perimotion
