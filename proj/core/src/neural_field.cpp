#include "perimotion/neural_field.hpp"

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "perimotion/errors.hpp"
#include "perimotion/random.hpp"

namespace perimotion {
namespace {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kEvalChunk = 4096;

std::atomic<bool> g_domain_warned{false};

}  // namespace

TimeCode encode_time(double t, double period) {
  if (!(period > 0.0)) throw ContractError("encode_time: period must be positive");
  double phase = std::fmod(t, period);
  if (phase < 0.0) phase += period;
  if (phase >= period) phase = 0.0;
  const double angle = 2.0 * std::numbers::pi * (phase / period);
  return {std::cos(angle), std::sin(angle)};
}

void FieldArchitecture::validate() const {
  if (hidden_layers < 1) throw ContractError("FieldArchitecture: hidden_layers must be >= 1");
  if (hidden_width < 1) throw ContractError("FieldArchitecture: hidden_width must be >= 1");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ContractError("FieldArchitecture: omega must be positive");
  if (!(period > 0.0) || !std::isfinite(period)) throw ContractError("FieldArchitecture: period must be positive");
}

VelocityFieldModel::VelocityFieldModel(const FieldArchitecture& arch, bool) : arch_(arch) {
  arch_.validate();
  layout();
}

VelocityFieldModel::VelocityFieldModel(const FieldArchitecture& arch, std::vector<float> parameters)
    : VelocityFieldModel(arch, true) {
  const std::size_t expected = params_.size();
  if (parameters.size() != expected) {
    throw ContractError("VelocityFieldModel: expected " + std::to_string(expected) + " parameters, got " +
                        std::to_string(parameters.size()));
  }
  params_ = std::move(parameters);
  refresh_mirror();
}

std::size_t VelocityFieldModel::parameter_count(const FieldArchitecture& arch) {
  arch.validate();
  const auto in = static_cast<std::size_t>(arch.input_dim());
  const auto width = static_cast<std::size_t>(arch.hidden_width);
  const auto out = static_cast<std::size_t>(FieldArchitecture::output_dim);
  const auto inner = static_cast<std::size_t>(arch.hidden_layers - 1);
  return in * width + width + inner * (width * width + width) + width * out + out;
}

void VelocityFieldModel::layout() {
  layers_.clear();
  std::size_t offset = 0;
  int fan_in = arch_.input_dim();
  for (int i = 0; i <= arch_.hidden_layers; ++i) {
    const int fan_out = i == arch_.hidden_layers ? FieldArchitecture::output_dim : arch_.hidden_width;
    LayerShape shape;
    shape.fan_in = fan_in;
    shape.fan_out = fan_out;
    shape.weight_offset = offset;
    offset += static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out);
    shape.bias_offset = offset;
    offset += static_cast<std::size_t>(fan_out);
    layers_.push_back(shape);
    fan_in = fan_out;
  }
  params_.assign(offset, 0.0f);
  params_f64_.assign(offset, 0.0);
}

VelocityFieldModel VelocityFieldModel::initialize(const FieldArchitecture& arch, std::uint64_t seed) {
  VelocityFieldModel model(arch, true);
  Rng rng(seed);
  for (std::size_t l = 0; l < model.layers_.size(); ++l) {
    const LayerShape& shape = model.layers_[l];
    const double fan_in = static_cast<double>(shape.fan_in);
    const double w_bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / arch.omega;
    const double b_bound = 1.0 / std::sqrt(fan_in);
    const std::size_t w_count = static_cast<std::size_t>(shape.fan_in) * static_cast<std::size_t>(shape.fan_out);
    for (std::size_t i = 0; i < w_count; ++i) {
      model.params_[shape.weight_offset + i] = static_cast<float>(rng.uniform(-w_bound, w_bound));
    }
    for (int i = 0; i < shape.fan_out; ++i) {
      model.params_[shape.bias_offset + static_cast<std::size_t>(i)] =
          static_cast<float>(rng.uniform(-b_bound, b_bound));
    }
  }
  model.refresh_mirror();
  return model;
}

std::span<const float> VelocityFieldModel::weights(std::size_t layer) const {
  const LayerShape& s = layers_.at(layer);
  return std::span<const float>(params_).subspan(s.weight_offset,
                                                 static_cast<std::size_t>(s.fan_in) * static_cast<std::size_t>(s.fan_out));
}

std::span<const float> VelocityFieldModel::bias(std::size_t layer) const {
  const LayerShape& s = layers_.at(layer);
  return std::span<const float>(params_).subspan(s.bias_offset, static_cast<std::size_t>(s.fan_out));
}

void VelocityFieldModel::update_parameters(const std::function<void(std::span<float>)>& fn) {
  fn(std::span<float>(params_));
  refresh_mirror();
}

void VelocityFieldModel::refresh_mirror() {
  params_f64_.resize(params_.size());
  std::copy(params_.begin(), params_.end(), params_f64_.begin());
}

void VelocityFieldModel::evaluate(std::span<const Vec3> points, double t, std::span<Vec3> velocities) const {
  if (points.size() != velocities.size()) {
    throw ContractError("VelocityFieldModel::evaluate: output span has wrong length");
  }
  check_domain(points, "velocity");

  const int in_dim = arch_.input_dim();
  double time_cols[2] = {t, 0.0};
  if (arch_.time_encoding) {
    const TimeCode code = encode_time(t, arch_.period);
    time_cols[0] = code.c;
    time_cols[1] = code.s;
  }

  RowMatrixD current;
  RowMatrixD next;
  for (std::size_t begin = 0; begin < points.size(); begin += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, points.size() - begin);
    const auto rows = static_cast<Eigen::Index>(count);
    current.resize(rows, in_dim);
    for (std::size_t i = 0; i < count; ++i) {
      const Vec3& p = points[begin + i];
      const auto r = static_cast<Eigen::Index>(i);
      current(r, 0) = p.x();
      current(r, 1) = p.y();
      current(r, 2) = p.z();
      current(r, 3) = time_cols[0];
      if (arch_.time_encoding) current(r, 4) = time_cols[1];
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerShape& s = layers_[l];
      Eigen::Map<const RowMatrixD> w(params_f64_.data() + s.weight_offset, s.fan_in, s.fan_out);
      Eigen::Map<const Eigen::RowVectorXd> b(params_f64_.data() + s.bias_offset, s.fan_out);
      next.noalias() = current * w;
      next.rowwise() += b;
      if (l + 1 < layers_.size()) next = (arch_.omega * next.array()).sin().matrix();
      current.swap(next);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      velocities[begin + i] = Vec3(current(r, 0), current(r, 1), current(r, 2));
    }
  }
}

Vec3 VelocityFieldModel::velocity(const Vec3& point, double t) const {
  Vec3 out;
  evaluate(std::span<const Vec3>(&point, 1), t, std::span<Vec3>(&out, 1));
  return out;
}

bool parameters_all_finite(const VelocityFieldModel& model) {
  const auto p = model.parameters();
  return std::all_of(p.begin(), p.end(), [](float v) { return std::isfinite(v); });
}

std::size_t check_domain(std::span<const Vec3> points, const char* context) {
  std::size_t outside = 0;
  for (const Vec3& p : points) {
    if (!p.allFinite()) throw NumericalError(-1, std::string(context) + ": non-finite query point");
    if (p.cwiseAbs().maxCoeff() > kDomainSlack) ++outside;
  }
  if (outside > 0 && !g_domain_warned.exchange(true)) {
    spdlog::warn("{}: {} point(s) outside the [-{}, {}]^3 evaluation slack; evaluating anyway", context, outside,
                 kDomainSlack, kDomainSlack);
  }
  return outside;
}

template <std::floating_point T>
FieldGraph<T>::FieldGraph(ad::Tape<T>& tape, const VelocityFieldModel& model)
    : FieldGraph(tape, model, std::vector<double>(model.parameters().begin(), model.parameters().end())) {}

template <std::floating_point T>
FieldGraph<T>::FieldGraph(ad::Tape<T>& tape, const VelocityFieldModel& model, std::span<const double> parameters)
    : tape_(&tape), model_(&model) {
  if (parameters.size() != model.parameters().size()) {
    throw ContractError("FieldGraph: parameter vector has wrong length");
  }
  for (const LayerShape& s : model.layers()) {
    const auto w = parameters.subspan(s.weight_offset,
                                      static_cast<std::size_t>(s.fan_in) * static_cast<std::size_t>(s.fan_out));
    const auto b = parameters.subspan(s.bias_offset, static_cast<std::size_t>(s.fan_out));
    weights_.push_back(tape.leaf(ad::Array<T>(static_cast<std::size_t>(s.fan_in), static_cast<std::size_t>(s.fan_out),
                                              std::vector<T>(w.begin(), w.end()))));
    biases_.push_back(
        tape.leaf(ad::Array<T>(1, static_cast<std::size_t>(s.fan_out), std::vector<T>(b.begin(), b.end()))));
  }
}

template <std::floating_point T>
ad::Var<T> FieldGraph<T>::operator()(ad::Var<T> points, double t) const {
  const FieldArchitecture& arch = model_->architecture();
  const std::size_t rows = points.rows();
  if (points.cols() != 3) throw ContractError("FieldGraph: points must be B x 3");

  ad::Array<T> time_cols(rows, arch.time_encoding ? 2 : 1);
  if (arch.time_encoding) {
    const TimeCode code = encode_time(t, arch.period);
    for (std::size_t r = 0; r < rows; ++r) {
      time_cols(r, 0) = static_cast<T>(code.c);
      time_cols(r, 1) = static_cast<T>(code.s);
    }
  } else {
    std::fill(time_cols.data.begin(), time_cols.data.end(), static_cast<T>(t));
  }

  ad::Var<T> h = ad::concat_cols(points, tape_->constant(std::move(time_cols)));
  const auto omega = static_cast<T>(arch.omega);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ad::affine(h, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) h = ad::sin_activation(h, omega);
  }
  return h;
}

template <std::floating_point T>
std::vector<double> FieldGraph<T>::gradient() const {
  std::vector<double> out(model_->parameters().size(), 0.0);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const LayerShape& s = model_->layers()[l];
    const ad::Array<T> gw = tape_->grad(weights_[l]);
    const ad::Array<T> gb = tape_->grad(biases_[l]);
    std::copy(gw.data.begin(), gw.data.end(), out.begin() + static_cast<std::ptrdiff_t>(s.weight_offset));
    std::copy(gb.data.begin(), gb.data.end(), out.begin() + static_cast<std::ptrdiff_t>(s.bias_offset));
  }
  return out;
}

template class FieldGraph<float>;
template class FieldGraph<double>;

}  // namespace perimotion
