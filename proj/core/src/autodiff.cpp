#include "perimotion/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "perimotion/errors.hpp"

namespace perimotion::ad {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMatrix<T>> as_matrix(Array<T>& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols)};
}

template <typename T>
Eigen::Map<const RowMatrix<T>> as_matrix(const Array<T>& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols)};
}

template <typename T>
Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> as_flat(Array<T>& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.data.size())};
}

template <typename T>
Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> as_flat(const Array<T>& a) {
  return {a.data.data(), static_cast<Eigen::Index>(a.data.size())};
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ContractError(std::string(op) + ": shape mismatch, " + detail);
}

template <typename T>
Tape<T>& common_tape(Var<T> a, Var<T> b, const char* op) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": invalid variable");
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

template <typename T>
Tape<T>& owning_tape(Var<T> a, const char* op) {
  if (!a.valid()) throw ContractError(std::string(op) + ": invalid variable");
  return *a.tape();
}

}  // namespace

template <std::floating_point T>
Array<T>::Array(std::size_t r, std::size_t c, std::vector<T> values)
    : rows(r), cols(c), data(values.begin(), values.end()) {
  if (data.size() != r * c) {
    throw ContractError("Array: " + std::to_string(data.size()) + " values for shape " + shape_str(r, c));
  }
}

template <std::floating_point T>
const Array<T>& Var<T>::value() const {
  if (tape_ == nullptr) throw ContractError("Var: invalid variable");
  return tape_->value(*this);
}

template <std::floating_point T>
Var<T> Tape<T>::leaf(Array<T> value) {
  Record r;
  r.op = OpKind::leaf;
  return push(std::move(value), std::move(r));
}

template <std::floating_point T>
Var<T> Tape<T>::constant(Array<T> value) {
  Record r;
  r.op = OpKind::constant;
  return push(std::move(value), std::move(r));
}

template <std::floating_point T>
void Tape<T>::check_owned(Var<T> v, const char* op) const {
  if (v.tape() != this || v.index() >= nodes_.size()) {
    throw ContractError(std::string(op) + ": variable is not recorded on this tape");
  }
}

template <std::floating_point T>
const Array<T>& Tape<T>::value(Var<T> v) const {
  check_owned(v, "value");
  return nodes_[v.index()].value;
}

template <std::floating_point T>
Array<T> Tape<T>::grad(Var<T> v) const {
  check_owned(v, "grad");
  const Node& n = nodes_[v.index()];
  if (n.grad.same_shape(n.value) && !n.grad.data.empty()) return n.grad;
  return Array<T>(n.value.rows, n.value.cols);
}

template <std::floating_point T>
Var<T> Tape<T>::push(Array<T> value, Record record) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  bool needs = record.op == OpKind::leaf;
  if (!needs && record.op != OpKind::constant) {
    needs = nodes_[record.a].needs_grad;
    const bool binary = record.op == OpKind::add || record.op == OpKind::sub ||
                        record.op == OpKind::concat_cols || record.op == OpKind::mse ||
                        record.op == OpKind::affine;
    if (binary) needs = needs || nodes_[record.b].needs_grad;
    if (record.op == OpKind::affine) needs = needs || nodes_[record.c].needs_grad;
  }
  if (!first_non_finite_) {
    const bool finite = std::all_of(value.data.begin(), value.data.end(),
                                    [](T x) { return std::isfinite(x); });
    if (!finite) first_non_finite_ = index;
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(record), needs});
  return Var<T>(this, index);
}

template <std::floating_point T>
void Tape<T>::clear() {
  nodes_.clear();
  first_non_finite_.reset();
}

template <std::floating_point T>
Array<T>& Tape<T>::materialized_grad(std::uint32_t index) {
  Node& n = nodes_[index];
  if (!n.grad.same_shape(n.value) || n.grad.data.size() != n.value.data.size()) {
    n.grad = Array<T>(n.value.rows, n.value.cols);
  }
  return n.grad;
}

template <std::floating_point T>
void Tape<T>::backward(Var<T> root) {
  check_owned(root, "backward");
  if (!nodes_[root.index()].value.is_scalar()) {
    throw ContractError("backward: root must be scalar, got " +
                        shape_str(nodes_[root.index()].value.rows, nodes_[root.index()].value.cols));
  }
  for (Node& n : nodes_) n.grad = Array<T>();
  materialized_grad(root.index()).data[0] = T(1);
  for (std::uint32_t i = root.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.data.empty() || !n.needs_grad) continue;
    if (n.record.op == OpKind::leaf || n.record.op == OpKind::constant) continue;
    propagate(i);
    // Interior gradients are consumed; release them to bound peak memory.
    n.grad = Array<T>();
  }
}

template <std::floating_point T>
void Tape<T>::propagate(std::uint32_t index) {
  Node& n = nodes_[index];
  const Array<T>& g = n.grad;
  const Record& r = n.record;
  auto wants = [&](std::uint32_t parent) { return nodes_[parent].needs_grad; };

  switch (r.op) {
    case OpKind::leaf:
    case OpKind::constant:
      break;
    case OpKind::affine: {
      const auto dy = as_matrix(g);
      if (wants(r.a)) {
        const auto w = as_matrix(nodes_[r.b].value);
        as_matrix(materialized_grad(r.a)).noalias() += dy * w.transpose();
      }
      if (wants(r.b)) {
        const auto x = as_matrix(nodes_[r.a].value);
        as_matrix(materialized_grad(r.b)).noalias() += x.transpose() * dy;
      }
      if (wants(r.c)) {
        as_matrix(materialized_grad(r.c)) += dy.colwise().sum();
      }
      break;
    }
    case OpKind::sin: {
      if (!wants(r.a)) break;
      const auto x = as_flat(nodes_[r.a].value);
      as_flat(materialized_grad(r.a)) += as_flat(g) * (r.scalar * (r.scalar * x).cos());
      break;
    }
    case OpKind::add:
      if (wants(r.a)) as_flat(materialized_grad(r.a)) += as_flat(g);
      if (wants(r.b)) as_flat(materialized_grad(r.b)) += as_flat(g);
      break;
    case OpKind::sub:
      if (wants(r.a)) as_flat(materialized_grad(r.a)) += as_flat(g);
      if (wants(r.b)) as_flat(materialized_grad(r.b)) -= as_flat(g);
      break;
    case OpKind::scale:
      if (wants(r.a)) as_flat(materialized_grad(r.a)) += r.scalar * as_flat(g);
      break;
    case OpKind::concat_cols: {
      const std::size_t left = nodes_[r.a].value.cols;
      const std::size_t right = nodes_[r.b].value.cols;
      const auto dy = as_matrix(g);
      if (wants(r.a)) {
        as_matrix(materialized_grad(r.a)) += dy.leftCols(static_cast<Eigen::Index>(left));
      }
      if (wants(r.b)) {
        as_matrix(materialized_grad(r.b)) += dy.rightCols(static_cast<Eigen::Index>(right));
      }
      break;
    }
    case OpKind::sum:
      if (wants(r.a)) as_flat(materialized_grad(r.a)) += g.data[0];
      break;
    case OpKind::mse: {
      const auto a = as_flat(nodes_[r.a].value);
      const auto b = as_flat(nodes_[r.b].value);
      const T factor = g.data[0] * T(2) / static_cast<T>(a.size());
      if (wants(r.a)) as_flat(materialized_grad(r.a)) += factor * (a - b);
      if (wants(r.b)) as_flat(materialized_grad(r.b)) -= factor * (a - b);
      break;
    }
    case OpKind::gather: {
      if (!wants(r.a)) break;
      Array<T>& gp = materialized_grad(r.a);
      const std::size_t dims = gp.cols;
      for (std::size_t row = 0; row < gp.rows; ++row) {
        const T upstream = g.data[row];
        for (std::size_t d = 0; d < dims; ++d) gp.data[row * dims + d] += upstream * r.aux.data[row * dims + d];
      }
      break;
    }
  }
}

template <std::floating_point T>
Var<T> affine(Var<T> input, Var<T> weights, Var<T> bias) {
  Tape<T>& tape = common_tape(input, weights, "affine");
  common_tape(input, bias, "affine");
  const Array<T>& x = tape.value(input);
  const Array<T>& w = tape.value(weights);
  const Array<T>& b = tape.value(bias);
  if (x.cols != w.rows) {
    shape_error("affine", "input " + shape_str(x.rows, x.cols) + " vs weights " + shape_str(w.rows, w.cols));
  }
  if (b.rows != 1 || b.cols != w.cols) {
    shape_error("affine", "bias " + shape_str(b.rows, b.cols) + " vs weights " + shape_str(w.rows, w.cols));
  }
  Array<T> y(x.rows, w.cols);
  auto ym = as_matrix(y);
  ym.noalias() = as_matrix(x) * as_matrix(w);
  ym.rowwise() += as_matrix(b).row(0);
  typename Tape<T>::Record r;
  r.op = OpKind::affine;
  r.a = input.index();
  r.b = weights.index();
  r.c = bias.index();
  return tape.push(std::move(y), std::move(r));
}

template <std::floating_point T>
Var<T> sin_activation(Var<T> input, T omega) {
  Tape<T>& tape = owning_tape(input, "sin_activation");
  if (!(omega > T(0))) throw ContractError("sin_activation: omega must be positive");
  const Array<T>& x = tape.value(input);
  Array<T> y(x.rows, x.cols);
  as_flat(y) = (omega * as_flat(x)).sin();
  typename Tape<T>::Record r;
  r.op = OpKind::sin;
  r.a = input.index();
  r.scalar = omega;
  return tape.push(std::move(y), std::move(r));
}

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = common_tape(a, b, "add");
  const Array<T>& x = tape.value(a);
  const Array<T>& y = tape.value(b);
  if (!x.same_shape(y)) shape_error("add", shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
  Array<T> out(x.rows, x.cols);
  as_flat(out) = as_flat(x) + as_flat(y);
  typename Tape<T>::Record r;
  r.op = OpKind::add;
  r.a = a.index();
  r.b = b.index();
  return tape.push(std::move(out), std::move(r));
}

template <std::floating_point T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = common_tape(a, b, "sub");
  const Array<T>& x = tape.value(a);
  const Array<T>& y = tape.value(b);
  if (!x.same_shape(y)) shape_error("sub", shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
  Array<T> out(x.rows, x.cols);
  as_flat(out) = as_flat(x) - as_flat(y);
  typename Tape<T>::Record r;
  r.op = OpKind::sub;
  r.a = a.index();
  r.b = b.index();
  return tape.push(std::move(out), std::move(r));
}

template <std::floating_point T>
Var<T> scale(Var<T> a, T factor) {
  Tape<T>& tape = owning_tape(a, "scale");
  const Array<T>& x = tape.value(a);
  Array<T> out(x.rows, x.cols);
  as_flat(out) = factor * as_flat(x);
  typename Tape<T>::Record r;
  r.op = OpKind::scale;
  r.a = a.index();
  r.scalar = factor;
  return tape.push(std::move(out), std::move(r));
}

template <std::floating_point T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Tape<T>& tape = common_tape(a, b, "concat_cols");
  const Array<T>& x = tape.value(a);
  const Array<T>& y = tape.value(b);
  if (x.rows != y.rows) {
    shape_error("concat_cols", shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
  }
  Array<T> out(x.rows, x.cols + y.cols);
  auto m = as_matrix(out);
  m.leftCols(static_cast<Eigen::Index>(x.cols)) = as_matrix(x);
  m.rightCols(static_cast<Eigen::Index>(y.cols)) = as_matrix(y);
  typename Tape<T>::Record r;
  r.op = OpKind::concat_cols;
  r.a = a.index();
  r.b = b.index();
  return tape.push(std::move(out), std::move(r));
}

template <std::floating_point T>
Var<T> sum(Var<T> a) {
  Tape<T>& tape = owning_tape(a, "sum");
  T total = T(0);
  for (T v : tape.value(a).data) total += v;
  typename Tape<T>::Record r;
  r.op = OpKind::sum;
  r.a = a.index();
  return tape.push(Array<T>::scalar(total), std::move(r));
}

template <std::floating_point T>
Var<T> mse(Var<T> a, Var<T> b) {
  Tape<T>& tape = common_tape(a, b, "mse");
  const Array<T>& x = tape.value(a);
  const Array<T>& y = tape.value(b);
  if (!x.same_shape(y)) shape_error("mse", shape_str(x.rows, x.cols) + " vs " + shape_str(y.rows, y.cols));
  if (x.size() == 0) throw ContractError("mse: empty operands");
  T acc = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T d = x.data[i] - y.data[i];
    acc += d * d;
  }
  typename Tape<T>::Record r;
  r.op = OpKind::mse;
  r.a = a.index();
  r.b = b.index();
  return tape.push(Array<T>::scalar(acc / static_cast<T>(x.size())), std::move(r));
}

template <std::floating_point T>
Var<T> gather(Var<T> points, Array<T> values, Array<T> spatial_gradient) {
  Tape<T>& tape = owning_tape(points, "gather");
  const Array<T>& p = tape.value(points);
  if (values.rows != p.rows || values.cols != 1) {
    shape_error("gather", "values " + shape_str(values.rows, values.cols) + " for " + std::to_string(p.rows) + " points");
  }
  if (!spatial_gradient.same_shape(p)) {
    shape_error("gather", "gradient " + shape_str(spatial_gradient.rows, spatial_gradient.cols) + " vs points " +
                              shape_str(p.rows, p.cols));
  }
  typename Tape<T>::Record r;
  r.op = OpKind::gather;
  r.a = points.index();
  r.aux = std::move(spatial_gradient);
  return tape.push(std::move(values), std::move(r));
}

#define PERIMOTION_INSTANTIATE_AD(T)                                 \
  template struct Array<T>;                                          \
  template class Var<T>;                                             \
  template class Tape<T>;                                            \
  template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                 \
  template Var<T> sin_activation<T>(Var<T>, T);                      \
  template Var<T> add<T>(Var<T>, Var<T>);                            \
  template Var<T> sub<T>(Var<T>, Var<T>);                            \
  template Var<T> scale<T>(Var<T>, T);                               \
  template Var<T> concat_cols<T>(Var<T>, Var<T>);                    \
  template Var<T> sum<T>(Var<T>);                                    \
  template Var<T> mse<T>(Var<T>, Var<T>);                            \
  template Var<T> gather<T>(Var<T>, Array<T>, Array<T>);

PERIMOTION_INSTANTIATE_AD(float)
PERIMOTION_INSTANTIATE_AD(double)

#undef PERIMOTION_INSTANTIATE_AD

}  // namespace perimotion::ad
