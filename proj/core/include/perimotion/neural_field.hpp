#pragma once

// Periodic SIREN velocity field: H(p, t) = MLP(p, cos(2*pi*t/T), sin(2*pi*t/T)).

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "perimotion/autodiff.hpp"
#include "perimotion/geometry.hpp"
#include "perimotion/velocity_field.hpp"

namespace perimotion {

struct TimeCode {
  double c = 1.0;
  double s = 0.0;
};

// Maps t onto the unit circle with period T. The phase is reduced with an
// exact fmod first, so t and t + k*T give bit-identical codes whenever
// t + k*T is itself representable.
TimeCode encode_time(double t, double period);

struct FieldArchitecture {
  int hidden_layers = 3;
  int hidden_width = 256;
  double omega = 6.0;
  double period = 1.0;
  bool time_encoding = true;

  static constexpr int output_dim = 3;
  int input_dim() const { return time_encoding ? 5 : 4; }
  void validate() const;
};

struct LayerShape {
  int fan_in = 0;
  int fan_out = 0;
  std::size_t weight_offset = 0;  // fan_in x fan_out, row-major
  std::size_t bias_offset = 0;    // fan_out
};

class VelocityFieldModel final : public VelocityField {
 public:
  // SIREN initialization: first layer U(-1/fan_in, 1/fan_in), later layers
  // U(-sqrt(6/fan_in)/omega, +sqrt(6/fan_in)/omega), biases U(+-1/sqrt(fan_in)).
  static VelocityFieldModel initialize(const FieldArchitecture& arch, std::uint64_t seed);

  static std::size_t parameter_count(const FieldArchitecture& arch);

  // Builds a model from an explicit parameter vector (checkpoint loading).
  VelocityFieldModel(const FieldArchitecture& arch, std::vector<float> parameters);

  const FieldArchitecture& architecture() const noexcept { return arch_; }
  std::span<const LayerShape> layers() const noexcept { return layers_; }
  std::span<const float> parameters() const noexcept { return params_; }
  std::span<const float> weights(std::size_t layer) const;
  std::span<const float> bias(std::size_t layer) const;

  // Mutation hook for the optimizer; keeps the double-precision mirror in sync.
  void update_parameters(const std::function<void(std::span<float>)>& fn);

  void evaluate(std::span<const Vec3> points, double t, std::span<Vec3> velocities) const override;
  Vec3 velocity(const Vec3& point, double t) const;

 private:
  VelocityFieldModel(const FieldArchitecture& arch, bool);
  void layout();
  void refresh_mirror();

  FieldArchitecture arch_;
  std::vector<LayerShape> layers_;
  std::vector<float> params_;
  std::vector<double> params_f64_;
};

bool parameters_all_finite(const VelocityFieldModel& model);

// Half-width of the cube in which evaluation is considered in-domain; points
// beyond it are still evaluated, with a logged warning.
inline constexpr double kDomainSlack = 1.5;

// Counts points outside [-kDomainSlack, kDomainSlack]^3 and logs one warning
// per process the first time any are seen. Non-finite points throw.
std::size_t check_domain(std::span<const Vec3> points, const char* context);

// The model's parameters lifted onto a tape as leaves, so velocities can be
// differentiated with respect to both the weights and the query points.
template <std::floating_point T>
class FieldGraph {
 public:
  FieldGraph(ad::Tape<T>& tape, const VelocityFieldModel& model);
  // Same architecture, explicit parameter values (model parameter order).
  // Finite-difference checks perturb these in full precision.
  FieldGraph(ad::Tape<T>& tape, const VelocityFieldModel& model, std::span<const double> parameters);

  // points: B x 3 normalized coordinates. Returns B x 3 velocities.
  ad::Var<T> operator()(ad::Var<T> points, double t) const;

  ad::Tape<T>& tape() const noexcept { return *tape_; }
  const VelocityFieldModel& model() const noexcept { return *model_; }

  // dRoot/dtheta after tape.backward(root), flattened in model parameter order.
  std::vector<double> gradient() const;

 private:
  ad::Tape<T>* tape_;
  const VelocityFieldModel* model_;
  std::vector<ad::Var<T>> weights_;
  std::vector<ad::Var<T>> biases_;
};

}  // namespace perimotion
