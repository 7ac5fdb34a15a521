#include "perimotion/training.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <string>

#include "perimotion/errors.hpp"
#include "perimotion/flow.hpp"
#include "perimotion/random.hpp"

namespace perimotion {

std::vector<Vec3> sample_points(const Volume4D& volume, std::size_t n, SamplingStrategy strategy, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_points: n must be >= 1");
  Rng rng(seed);
  std::vector<Vec3> points;
  points.reserve(n);

  std::size_t uniform_count = n;
  if (strategy == SamplingStrategy::foreground) {
    if (volume.frames.empty()) throw ContractError("sample_points: volume has no frames");
    const Grid3& first = volume.frames.front();
    std::vector<std::size_t> foreground;
    for (std::size_t i = 0; i < first.values.size(); ++i) {
      if (first.values[i] > 0.1f) foreground.push_back(i);
    }
    if (foreground.empty()) {
      throw DataError("sample_points: foreground sampling requested but frame 0 has no voxel above 0.1");
    }
    const std::size_t fg_count = n / 2;
    uniform_count = n - fg_count;
    const GridShape& s = first.shape;
    for (std::size_t p = 0; p < fg_count; ++p) {
      std::size_t idx = foreground[rng.index(foreground.size())];
      const std::size_t i = idx % s[0];
      idx /= s[0];
      const std::size_t j = idx % s[1];
      const std::size_t k = idx / s[1];
      const std::array<std::size_t, 3> ijk{i, j, k};
      Vec3 q;
      for (std::size_t a = 0; a < 3; ++a) {
        const double cells = s[a] > 1 ? static_cast<double>(s[a] - 1) : 1.0;
        const double centre = -1.0 + 2.0 * static_cast<double>(ijk[a]) / cells;
        const double jitter = rng.uniform(-1.0, 1.0) / cells;
        q[static_cast<Eigen::Index>(a)] = std::clamp(centre + jitter, -1.0, 1.0);
      }
      points.push_back(q);
    }
  }
  for (std::size_t p = 0; p < uniform_count; ++p) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    const double z = rng.uniform(-1.0, 1.0);
    points.emplace_back(x, y, z);
  }
  return points;
}

template <std::floating_point T>
ad::Var<T> points_to_var(ad::Tape<T>& tape, std::span<const Vec3> points) {
  ad::Array<T> a(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) a(i, d) = static_cast<T>(points[i][static_cast<Eigen::Index>(d)]);
  }
  return tape.constant(std::move(a));
}

template <std::floating_point T>
ad::Var<T> data_loss_from_positions(const Volume4D& volume, std::span<const ad::Var<T>> frame_positions) {
  const std::size_t n = volume.frames.size();
  if (n < 2) throw ContractError("data_loss: volume needs at least 2 frames");
  if (frame_positions.size() != n) throw ContractError("data_loss: one position set per frame required");
  const ad::Var<T> target = sample_trilinear(volume.frames.back(), frame_positions.back());
  ad::Var<T> total;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const ad::Var<T> term = ad::mse(sample_trilinear(volume.frames[i], frame_positions[i]), target);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

template <std::floating_point T>
ad::Var<T> cycle_loss_from_positions(ad::Var<T> seeds, ad::Var<T> final_positions) {
  // mse averages over 3n entries; the cycle term averages squared norms over n.
  return ad::scale(ad::mse(seeds, final_positions), T(3));
}

template <std::floating_point T>
ad::Var<T> data_loss(const FieldGraph<T>& field, const Volume4D& volume, std::span<const Vec3> points,
                     int steps_per_frame) {
  volume.validate();
  const ad::Var<T> seeds = points_to_var(field.tape(), points);
  const auto positions = flow_at_frames_graph<T>(field, seeds, volume.frame_times, steps_per_frame);
  return data_loss_from_positions<T>(volume, positions);
}

template <std::floating_point T>
ad::Var<T> cycle_loss(const FieldGraph<T>& field, std::span<const Vec3> points, int steps) {
  const ad::Var<T> seeds = points_to_var(field.tape(), points);
  const std::vector<double> grid = euler_grid(0.0, field.model().architecture().period, steps);
  const auto positions = integrate_graph<T>(field, seeds, grid);
  return cycle_loss_from_positions<T>(seeds, positions.back());
}

template <std::floating_point T>
ObjectiveTerms<T> objective(const FieldGraph<T>& field, const Volume4D& volume, std::span<const Vec3> points,
                            int steps_per_frame, double lambda, bool cycle_enabled) {
  const ad::Var<T> seeds = points_to_var(field.tape(), points);
  const auto positions = flow_at_frames_graph<T>(field, seeds, volume.frame_times, steps_per_frame);
  ObjectiveTerms<T> terms;
  terms.data = data_loss_from_positions<T>(volume, positions);
  terms.cycle = cycle_loss_from_positions<T>(seeds, positions.back());
  terms.total = cycle_enabled ? ad::add(terms.data, ad::scale(terms.cycle, static_cast<T>(lambda))) : terms.data;
  return terms;
}

template <std::floating_point P>
void adam_step(std::span<P> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and state sizes differ");
  }
  if (!(hyper.learning_rate > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    const double update = hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    params[i] = static_cast<P>(static_cast<double>(params[i]) - update);
  }
}

namespace {

template <std::floating_point T>
EpochRecord run_epoch(ad::Tape<T>& tape, VelocityFieldModel& model, AdamState& state, const Volume4D& volume,
                      const FitConfig& config, int epoch) {
  tape.clear();
  const std::uint64_t point_seed = Rng(config.seed, static_cast<std::uint64_t>(epoch) + 1).bits();
  const std::vector<Vec3> points = sample_points(volume, config.points_per_epoch, config.sampling, point_seed);

  const FieldGraph<T> field(tape, model);
  const ObjectiveTerms<T> terms =
      objective<T>(field, volume, points, config.steps_per_frame, config.lambda, config.cycle_enabled);

  EpochRecord record;
  record.epoch = epoch;
  record.data_loss = static_cast<double>(terms.data.value().data[0]);
  record.cycle_loss = static_cast<double>(terms.cycle.value().data[0]);
  record.total = static_cast<double>(terms.total.value().data[0]);
  if (tape.first_non_finite() || !std::isfinite(record.total)) {
    throw NumericalError(epoch, "fit: non-finite value in the forward pass at epoch " + std::to_string(epoch));
  }

  tape.backward(terms.total);
  const std::vector<double> grads = field.gradient();
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericalError(epoch, "fit: non-finite gradient at epoch " + std::to_string(epoch));
  }
  AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  model.update_parameters([&](std::span<float> params) { adam_step<float>(params, grads, state, hyper); });
  if (!parameters_all_finite(model)) {
    throw NumericalError(epoch, "fit: non-finite parameters after update at epoch " + std::to_string(epoch));
  }
  return record;
}

template <std::floating_point T>
void run_all(VelocityFieldModel& model, FitReport& report, const Volume4D& volume, const FitConfig& config,
             const EpochCallback& on_epoch) {
  ad::Tape<T> tape;
  AdamState state(model.parameters().size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    report.history.push_back(run_epoch<T>(tape, model, state, volume, config, epoch));
    if (on_epoch) on_epoch(report.history.back());
  }
}

}  // namespace

FitResult fit(const Volume4D& volume, const FitConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  volume.validate();
  const auto start = std::chrono::steady_clock::now();

  FitResult result{VelocityFieldModel::initialize(config.architecture(), config.seed), FitReport{}};
  FitReport& report = result.report;
  report.config = config;
  if (!config.cycle_enabled && config.lambda > 0.0) {
    report.lambda_ignored = true;
    report.warnings.push_back("lambda=" + std::to_string(config.lambda) +
                              " ignored because cycle_enabled is false");
    spdlog::warn("{}", report.warnings.back());
  }

  if (config.precision == Precision::f64) {
    run_all<double>(result.model, report, volume, config, on_epoch);
  } else {
    run_all<float>(result.model, report, volume, config, on_epoch);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

#define PERIMOTION_INSTANTIATE_TRAINING(T)                                                                     \
  template ad::Var<T> points_to_var<T>(ad::Tape<T>&, std::span<const Vec3>);                                  \
  template ad::Var<T> data_loss_from_positions<T>(const Volume4D&, std::span<const ad::Var<T>>);              \
  template ad::Var<T> cycle_loss_from_positions<T>(ad::Var<T>, ad::Var<T>);                                    \
  template ad::Var<T> data_loss<T>(const FieldGraph<T>&, const Volume4D&, std::span<const Vec3>, int);        \
  template ad::Var<T> cycle_loss<T>(const FieldGraph<T>&, std::span<const Vec3>, int);                        \
  template ObjectiveTerms<T> objective<T>(const FieldGraph<T>&, const Volume4D&, std::span<const Vec3>, int, \
                                          double, bool);                                                       \
  template void adam_step<T>(std::span<T>, std::span<const double>, AdamState&, const AdamHyper&);

PERIMOTION_INSTANTIATE_TRAINING(float)
PERIMOTION_INSTANTIATE_TRAINING(double)

#undef PERIMOTION_INSTANTIATE_TRAINING

}  // namespace perimotion
