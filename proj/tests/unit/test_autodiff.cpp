#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "perimotion/autodiff.hpp"
#include "perimotion/errors.hpp"
#include "perimotion/random.hpp"

using namespace perimotion;
using perimotion::testing::max_relative_error;
using perimotion::testing::numeric_gradient;
using perimotion::testing::numeric_gradient4;

namespace {

using ArrayD = ad::Array<double>;
using VarD = ad::Var<double>;

ArrayD random_array(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  ArrayD a(r, c);
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

// Builds a scalar loss from leaf values; used to compare tape gradients with
// central differences over every leaf entry.
using GraphBuilder = std::function<VarD(ad::Tape<double>&, std::vector<VarD>&)>;

double check_gradients(const std::vector<ArrayD>& inputs, const GraphBuilder& build, double h = 1e-3) {
  ad::Tape<double> tape;
  std::vector<VarD> leaves;
  for (const ArrayD& a : inputs) leaves.push_back(tape.leaf(a));
  const VarD root = build(tape, leaves);
  tape.backward(root);
  double worst = 0.0;
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    const ArrayD analytic = tape.grad(leaves[l]);
    auto f = [&](std::span<const double> x) {
      ad::Tape<double> t2;
      std::vector<VarD> ls;
      for (std::size_t m = 0; m < inputs.size(); ++m) {
        ls.push_back(m == l ? t2.leaf(ArrayD(inputs[m].rows, inputs[m].cols, std::vector<double>(x.begin(), x.end())))
                            : t2.leaf(inputs[m]));
      }
      return build(t2, ls).value().data[0];
    };
    const auto numeric = numeric_gradient4(f, inputs[l].data, h);
    worst = std::max(worst, max_relative_error(analytic.data, numeric, 1e-6));
  }
  return worst;
}

}  // namespace

TEST_CASE("affine forward examples") {
  ad::Tape<double> tape;
  auto x = tape.constant(ArrayD(1, 2, {1.0, 0.0}));
  auto w = tape.constant(ArrayD(2, 2, {1.0, 0.0, 0.0, 1.0}));
  auto b = tape.constant(ArrayD(1, 2, {0.0, 0.0}));
  CHECK(ad::affine(x, w, b).value().data == ArrayD::Storage{1.0, 0.0});

  auto x1 = tape.constant(ArrayD::scalar(2.0));
  auto w1 = tape.constant(ArrayD::scalar(3.0));
  auto b1 = tape.constant(ArrayD::scalar(1.0));
  CHECK(ad::affine(x1, w1, b1).value().data[0] == 7.0);
}

TEST_CASE("affine weight gradient matches central differences") {
  Rng rng(11);
  const std::vector<ArrayD> in{random_array(rng, 4, 3), random_array(rng, 3, 2), random_array(rng, 1, 2)};
  const double err = check_gradients(in, [](ad::Tape<double>&, std::vector<VarD>& l) {
    return ad::sum(ad::affine(l[0], l[1], l[2]));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("sin activation values and gradient") {
  ad::Tape<double> tape;
  CHECK(ad::sin_activation(tape.constant(ArrayD::scalar(0.0)), 30.0).value().data[0] == 0.0);
  CHECK(ad::sin_activation(tape.constant(ArrayD::scalar(std::numbers::pi / 12)), 6.0).value().data[0] ==
        doctest::Approx(1.0).epsilon(1e-15));

  ad::Tape<double> t2;
  auto x = t2.leaf(ArrayD::scalar(0.3));
  t2.backward(ad::sin_activation(x, 6.0));
  const double analytic = t2.grad(x).data[0];
  CHECK(analytic == doctest::Approx(6.0 * std::cos(1.8)).epsilon(1e-14));
  const auto numeric = numeric_gradient([](std::span<const double> v) { return std::sin(6.0 * v[0]); }, std::vector<double>{0.3}, 1e-6);
  CHECK(std::abs(analytic - numeric[0]) / std::abs(analytic) < 1e-8);
}

TEST_CASE("mse values and gradient") {
  ad::Tape<double> tape;
  auto a = tape.constant(ArrayD(1, 2, {1.0, 1.0}));
  auto z = tape.constant(ArrayD(1, 2, {0.0, 0.0}));
  CHECK(ad::mse(a, a).value().data[0] == 0.0);
  CHECK(ad::mse(a, z).value().data[0] == 1.0);

  Rng rng(3);
  const std::vector<ArrayD> in{random_array(rng, 100, 1), random_array(rng, 100, 1)};
  CHECK(check_gradients(in, [](ad::Tape<double>&, std::vector<VarD>& l) { return ad::mse(l[0], l[1]); }) < 1e-6);
}

TEST_CASE("backward basic cases") {
  ad::Tape<double> tape;
  auto x = tape.leaf(ArrayD(2, 3, 0.5));
  tape.backward(ad::sum(x));
  for (double g : tape.grad(x).data) CHECK(g == 1.0);

  ad::Tape<double> t2;
  auto y = t2.leaf(ArrayD::scalar(3.0));
  t2.backward(ad::mse(y, t2.constant(ArrayD::scalar(0.0))));
  CHECK(t2.grad(y).data[0] == 6.0);
}

TEST_CASE("every operation passes randomized gradient checks") {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.index(5);
    const std::size_t f = 1 + rng.index(4);
    const std::size_t g = 1 + rng.index(4);
    const double omega = rng.uniform(0.5, 8.0);
    const double k = rng.uniform(-2.0, 2.0);
    switch (trial % 7) {
      case 0:
        worst = std::max(worst, check_gradients({random_array(rng, b, f), random_array(rng, f, g), random_array(rng, 1, g)},
                                                [](auto&, auto& l) { return ad::sum(ad::affine(l[0], l[1], l[2])); }));
        break;
      case 1:
        worst = std::max(worst, check_gradients({random_array(rng, b, f)}, [omega](auto&, auto& l) {
                           return ad::sum(ad::sin_activation(l[0], omega));
                         }));
        break;
      case 2:
        worst = std::max(worst, check_gradients({random_array(rng, b, f), random_array(rng, b, f)},
                                                [](auto&, auto& l) { return ad::mse(ad::add(l[0], l[1]), l[1]); }));
        break;
      case 3:
        worst = std::max(worst, check_gradients({random_array(rng, b, f), random_array(rng, b, f)}, [](auto& t, auto& l) {
                           return ad::mse(ad::sub(l[0], l[1]), t.constant(ArrayD(l[0].rows(), l[0].cols(), 0.25)));
                         }));
        break;
      case 4:
        worst = std::max(worst, check_gradients({random_array(rng, b, f)}, [k](auto& t, auto& l) {
                           return ad::mse(ad::scale(l[0], k), t.constant(ArrayD(l[0].rows(), l[0].cols(), 0.1)));
                         }));
        break;
      case 5:
        worst = std::max(worst, check_gradients({random_array(rng, b, f), random_array(rng, b, g)}, [](auto& t, auto& l) {
                           const auto c = ad::concat_cols(l[0], l[1]);
                           return ad::mse(c, t.constant(ArrayD(c.rows(), c.cols(), -0.3)));
                         }));
        break;
      case 6: {
        // gather against the analytic field s(p) = sum_d sin(p_d) + p_0 p_1
        worst = std::max(worst, check_gradients({random_array(rng, b, 3)}, [](auto& t, auto& l) {
                           const ArrayD& p = l[0].value();
                           ArrayD v(p.rows, 1);
                           ArrayD dv(p.rows, 3);
                           for (std::size_t r = 0; r < p.rows; ++r) {
                             v(r, 0) = std::sin(p(r, 0)) + std::sin(p(r, 1)) + std::sin(p(r, 2)) + p(r, 0) * p(r, 1);
                             dv(r, 0) = std::cos(p(r, 0)) + p(r, 1);
                             dv(r, 1) = std::cos(p(r, 1)) + p(r, 0);
                             dv(r, 2) = std::cos(p(r, 2));
                           }
                           const auto s = ad::gather(l[0], std::move(v), std::move(dv));
                           return ad::mse(s, t.constant(ArrayD(s.rows(), 1, 0.2)));
                         }));
        break;
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("backward is linear in the root") {
  Rng rng(5);
  const ArrayD xv = random_array(rng, 3, 2);
  const ArrayD wv = random_array(rng, 2, 2);
  const ArrayD bv = random_array(rng, 1, 2);
  auto grads = [&](double a, double b) {
    ad::Tape<double> t;
    auto x = t.leaf(xv);
    auto w = t.leaf(wv);
    auto bias = t.leaf(bv);
    auto f = ad::sum(ad::sin_activation(ad::affine(x, w, bias), 2.0));
    auto g = ad::mse(x, t.constant(ArrayD(3, 2, 0.5)));
    ad::Var<double> root;
    if (a == 0.0) {
      root = ad::scale(g, b);
    } else if (b == 0.0) {
      root = ad::scale(f, a);
    } else {
      root = ad::add(ad::scale(f, a), ad::scale(g, b));
    }
    t.backward(root);
    return t.grad(x).data;
  };
  const double a = 1.7, b = -0.4;
  const auto combined = grads(a, b);
  const auto gf = grads(1.0, 0.0);
  const auto gg = grads(0.0, 1.0);
  for (std::size_t i = 0; i < combined.size(); ++i) CHECK(combined[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("unreachable leaves get exactly zero gradient") {
  ad::Tape<double> t;
  auto x = t.leaf(ArrayD(2, 2, 1.0));
  auto unused = t.leaf(ArrayD(3, 1, 4.0));
  t.backward(ad::sum(ad::scale(x, 2.0)));
  for (double g : t.grad(unused).data) CHECK(g == 0.0);
  CHECK(t.grad(unused).rows == 3);
}

TEST_CASE("replayed tapes give bit-identical gradients and repeated backward is idempotent") {
  Rng rng(9);
  const ArrayD xv = random_array(rng, 6, 3);
  const ArrayD wv = random_array(rng, 3, 4);
  const ArrayD bv = random_array(rng, 1, 4);
  auto run = [&](ad::Tape<float>& t) {
    t.clear();
    ad::Array<float> xf(6, 3), wf(3, 4), bf(1, 4);
    for (std::size_t i = 0; i < xv.size(); ++i) xf.data[i] = static_cast<float>(xv.data[i]);
    for (std::size_t i = 0; i < wv.size(); ++i) wf.data[i] = static_cast<float>(wv.data[i]);
    for (std::size_t i = 0; i < bv.size(); ++i) bf.data[i] = static_cast<float>(bv.data[i]);
    auto w = t.leaf(wf);
    auto root = ad::sum(ad::sin_activation(ad::affine(t.constant(xf), w, t.leaf(bf)), 6.0f));
    t.backward(root);
    auto first = t.grad(w).data;
    t.backward(root);
    CHECK(first == t.grad(w).data);
    return first;
  };
  ad::Tape<float> tape;
  const auto g1 = run(tape);
  const auto g2 = run(tape);
  CHECK(g1 == g2);
  tape.clear();
  CHECK(tape.size() == 0);
}

TEST_CASE("contract errors and the non-finite flag") {
  ad::Tape<double> t;
  auto a = t.leaf(ArrayD(2, 2, 1.0));
  auto b = t.leaf(ArrayD(3, 2, 1.0));
  CHECK_THROWS_AS(ad::add(a, b), ContractError);
  CHECK_THROWS_AS(t.backward(a), ContractError);
  CHECK_THROWS_AS(ad::sin_activation(a, 0.0), ContractError);

  ad::Tape<double> other;
  auto foreign = other.leaf(ArrayD(2, 2, 1.0));
  CHECK_THROWS_AS(ad::add(a, foreign), ContractError);

  CHECK_FALSE(t.first_non_finite().has_value());
  auto bad = t.constant(ArrayD(1, 1, std::numeric_limits<double>::infinity()));
  const auto scaled = ad::scale(bad, 2.0);
  REQUIRE(t.first_non_finite().has_value());
  CHECK(*t.first_non_finite() == bad.index());
  CHECK(std::isinf(scaled.value().data[0]));
}
