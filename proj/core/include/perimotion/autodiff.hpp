#pragma once

// Minimal reverse-mode differentiation over dense row-major 2-D arrays.
//
// The operation set is closed: exactly what the registration objective
// needs (affine maps, sine activations, elementwise arithmetic, reductions
// and a pointwise field gather). Scalars are 1x1 arrays.
//
// A Tape records operations in execution order; backward() walks it in
// reverse so every node is visited after all of its consumers. A Tape is
// single-owner: do not record onto it from more than one thread.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <new>
#include <optional>
#include <span>
#include <vector>

namespace perimotion::ad {

// Storage is 64-byte aligned so vectorized kernels split work the same way on
// every run, which keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <std::floating_point T>
struct Array {
  using Storage = std::vector<T, AlignedAllocator<T>>;

  std::size_t rows = 0;
  std::size_t cols = 0;
  Storage data;

  Array() = default;
  Array(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  Array(std::size_t r, std::size_t c, std::vector<T> values);

  static Array scalar(T v) { return Array(1, 1, v); }

  std::size_t size() const noexcept { return data.size(); }
  bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  bool same_shape(const Array& o) const noexcept { return rows == o.rows && cols == o.cols; }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  affine,
  sin,
  add,
  sub,
  scale,
  concat_cols,
  sum,
  mse,
  gather,
};

template <std::floating_point T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives
// and has not been cleared.
template <std::floating_point T>
class Var {
 public:
  Var() = default;

  Tape<T>* tape() const noexcept { return tape_; }
  std::uint32_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Array<T>& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape<T>* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

template <std::floating_point T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input; gradients are accumulated for it.
  Var<T> leaf(Array<T> value);
  // Input that never receives a gradient.
  Var<T> constant(Array<T> value);

  const Array<T>& value(Var<T> v) const;
  // dRoot/dv after backward(). Zeros for nodes the root does not depend on.
  Array<T> grad(Var<T> v) const;

  // Reverse sweep from a scalar root. Gradients from a previous backward()
  // are discarded first, so repeated calls are idempotent.
  void backward(Var<T> root);

  // Drops every recorded node. Outstanding Vars become dangling.
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }

  // Index of the first node whose forward value contained NaN or Inf.
  std::optional<std::uint32_t> first_non_finite() const noexcept { return first_non_finite_; }

  // Recording primitives used by the free-function ops below.
  struct Record {
    OpKind op = OpKind::constant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t c = 0;
    T scalar = T(0);
    Array<T> aux;
  };
  Var<T> push(Array<T> value, Record record);
  void check_owned(Var<T> v, const char* op) const;

 private:
  struct Node {
    Array<T> value;
    Array<T> grad;
    Record record;
    bool needs_grad = false;
  };

  Array<T>& materialized_grad(std::uint32_t index);
  void propagate(std::uint32_t index);

  std::vector<Node> nodes_;
  std::optional<std::uint32_t> first_non_finite_;
};

// value = input . weights + bias (bias broadcast over rows).
// input: B x F_in, weights: F_in x F_out, bias: 1 x F_out.
template <std::floating_point T>
Var<T> affine(Var<T> input, Var<T> weights, Var<T> bias);

// Elementwise sin(omega * x); omega must be positive.
template <std::floating_point T>
Var<T> sin_activation(Var<T> input, T omega);

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> sub(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> scale(Var<T> a, T factor);

// [a | b] along columns; row counts must agree.
template <std::floating_point T>
Var<T> concat_cols(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> sum(Var<T> a);

// Mean of squared elementwise differences.
template <std::floating_point T>
Var<T> mse(Var<T> a, Var<T> b);

// Pointwise evaluation of an external scalar field at B points (B x D).
// The caller supplies the field values (B x 1) and their spatial gradient
// (B x D); backward chains dL/dvalue through that gradient into the points.
template <std::floating_point T>
Var<T> gather(Var<T> points, Array<T> values, Array<T> spatial_gradient);

}  // namespace perimotion::ad
