#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <numbers>

#include "aimm/numerics/autodiff.hpp"
#include "aimm/numerics/complex_matrix.hpp"
#include "aimm/numerics/grad_check.hpp"
#include "aimm/numerics/rng.hpp"

using namespace aimm;
using ad::Var;
using V = Var<double>;

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal() * scale;
  return t;
}

ComplexMatrix random_complex(Rng& rng, std::size_t m, std::size_t n) {
  ComplexMatrix h(m, n);
  for (auto& z : h.entries()) z = cplx(rng.normal(), rng.normal());
  return h;
}

// 200 plain power-iteration steps on h·hᴴ from the all-ones start.
CVector power_iteration_oracle(const ComplexMatrix& h, int steps = 200) {
  const ComplexMatrix g = h * h.adjoint();
  CVector x(h.rows(), cplx(1.0, 0.0));
  for (int s = 0; s < steps; ++s) {
    x = g * x;
    const double n = norm(x);
    for (auto& z : x) z /= n;
  }
  return x;
}

}  // namespace

TEST_CASE("rng streams are reproducible and independent", "[numerics][rng]") {
  Rng a(42, {1, 2});
  Rng b(42, {1, 2});
  Rng c(42, {1, 3});
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    REQUIRE(x == b.next_u64());
    REQUIRE(x != c.next_u64());
  }
  Rng resumed = Rng::from_state(a.key(), a.counter());
  REQUIRE(resumed.next_u64() == a.next_u64());

  Rng u(7);
  double total = 0;
  for (int i = 0; i < 20000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    total += x;
  }
  CHECK(total / 20000 == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("matmul", "[numerics][matmul]") {
  SECTION("identity") {
    Rng rng(1);
    auto x = V::constant(random_tensor(rng, {3, 3}));
    auto eye = V::constant(Tensor<double>::matrix(3, 3, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
    REQUIRE(ad::matmul(eye, x).value() == x.value());
  }
  SECTION("hand arithmetic") {
    auto a = V::constant(Tensor<double>::matrix(2, 2, {{1, 2}, {3, 4}}));
    auto b = V::constant(Tensor<double>::matrix(2, 1, {{0}, {1}}));
    const auto c = ad::matmul(a, b).value();
    REQUIRE(c.shape() == Shape{2, 1});
    REQUIRE(c[0] == 2.0);
    REQUIRE(c[1] == 4.0);
  }
  SECTION("shape mismatch") {
    auto a = V::constant(Tensor<double>({2, 3}));
    auto b = V::constant(Tensor<double>({2, 3}));
    REQUIRE_THROWS_AS(ad::matmul(a, b), DimensionError);
  }
  SECTION("backward matches finite differences") {
    Rng rng(5);
    auto a = V::leaf(random_tensor(rng, {5, 7}), true);
    auto b = V::leaf(random_tensor(rng, {7, 3}), true);
    auto w = random_tensor(rng, {5, 3});
    auto loss = [&] { return ad::sum(ad::mul(ad::matmul(a, b), V::constant(w))); };
    REQUIRE(ad::grad_check_leaves(loss, {a, b}) < 1e-6);
  }
}

TEST_CASE("softmax_rows", "[numerics][softmax]") {
  auto zero = V::constant(Tensor<double>({1, 3}));
  const auto s = ad::softmax_rows(zero).value();
  for (int i = 0; i < 3; ++i) REQUIRE(s[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = V::constant(Tensor<double>::matrix(1, 2, {{1000, 0}}));
  const auto sb = ad::softmax_rows(big).value();
  REQUIRE(std::abs(sb[0] - 1.0) < 1e-12);
  REQUIRE(std::abs(sb[1]) < 1e-12);

  Rng rng(3);
  auto x = random_tensor(rng, {6, 9}, 3.0);
  auto shifted = x;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 9; ++c) shifted.at(r, c) += static_cast<double>(r) * 17.5 - 40.0;
  const auto y = ad::softmax_rows(V::constant(x)).value();
  const auto ys = ad::softmax_rows(V::constant(shifted)).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      total += y.at(r, c);
      REQUIRE(y.at(r, c) >= 0.0);
      REQUIRE(std::abs(y.at(r, c) - ys.at(r, c)) < 1e-12);
    }
    REQUIRE(std::abs(total - 1.0) < 1e-12);
  }

  auto nan_in = V::constant(Tensor<double>::matrix(1, 2, {{std::nan(""), 0}}));
  REQUIRE(std::isnan(ad::softmax_rows(nan_in).value()[0]));
}

TEST_CASE("layer_norm", "[numerics][layer_norm]") {
  auto gain = V::constant(Tensor<double>::filled({4}, 1.0));
  auto bias = V::constant(Tensor<double>({4}));
  auto constant = V::constant(Tensor<double>::filled({1, 4}, 2.5));
  const auto normalized = ad::layer_norm(constant, gain, bias, 1e-5);
  for (double v : normalized.value().values()) REQUIRE(v == 0.0);

  auto g2 = V::constant(Tensor<double>::filled({2}, 1.0));
  auto b2 = V::constant(Tensor<double>({2}));
  auto x = V::constant(Tensor<double>::matrix(1, 2, {{1, -1}}));
  const auto y = ad::layer_norm(x, g2, b2, 1e-15).value();
  REQUIRE(y[0] == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(y[1] == Catch::Approx(-1.0).epsilon(1e-12));

  Rng rng(9);
  auto xin = V::leaf(random_tensor(rng, {3, 8}), true);
  auto gl = V::leaf(random_tensor(rng, {8}), true);
  auto bl = V::leaf(random_tensor(rng, {8}), true);
  auto w = random_tensor(rng, {3, 8});
  auto loss = [&] {
    return ad::sum(ad::mul(ad::layer_norm(xin, gl, bl, 1e-5), V::constant(w)));
  };
  REQUIRE(ad::grad_check_leaves(loss, {xin, gl, bl}) < 1e-5);
}

TEST_CASE("every differentiable op matches finite differences", "[numerics][gradients]") {
  struct OpCase {
    std::string name;
    std::vector<Shape> leaf_shapes;
    std::function<V(const std::vector<V>&)> apply;
  };
  const std::vector<int> ids{4, 0, 4, 2};
  const std::vector<OpCase> ops = {
      {"matmul_bt", {{4, 5}, {3, 5}}, [](auto& l) { return ad::matmul_bt(l[0], l[1]); }},
      {"transpose", {{4, 5}}, [](auto& l) { return ad::transpose(l[0]); }},
      {"add_sub_mul", {{3, 4}, {3, 4}},
       [](auto& l) { return ad::mul(ad::add(l[0], l[1]), ad::sub(l[0], l[1])); }},
      {"scale_add_row", {{3, 4}, {4}},
       [](auto& l) { return ad::add_row(ad::scale(l[0], 0.7), l[1]); }},
      {"mul_scalar_exp", {{3, 4}, {1}},
       [](auto& l) { return ad::mul_scalar(l[0], ad::exp(l[1])); }},
      {"gelu", {{4, 6}}, [](auto& l) { return ad::gelu(l[0]); }},
      {"softmax", {{4, 6}}, [](auto& l) { return ad::softmax_rows(l[0]); }},
      {"l2_normalize", {{4, 6}}, [](auto& l) { return ad::l2_normalize_rows(l[0]); }},
      {"gather_concat_slice", {{5, 3}, {4, 3}},
       [&ids](auto& l) {
         return ad::concat_rows<double>({ad::gather_rows(l[0], ids), ad::slice_rows(l[1], 1, 2)});
       }},
      {"sequence_assembly", {{3, 4}, {2, 4}, {5, 4}},
       [](auto& l) {
         return ad::last_rows(ad::add_positional(ad::prepend_to_block(l[0], l[1]), l[2], 3), 3);
       }},
      {"causal_attention", {{8, 6}, {8, 6}, {8, 6}},
       [](auto& l) { return ad::causal_attention(l[0], l[1], l[2], 4, 2); }},
      {"mean", {{3, 3}}, [](auto& l) { return ad::mean(ad::mul(l[0], l[0])); }},
  };
  for (const auto& op : ops) {
    for (std::uint64_t point = 0; point < 10; ++point) {
      Rng rng(1000 + point, {std::hash<std::string>{}(op.name)});
      std::vector<V> leaves;
      for (const auto& shape : op.leaf_shapes) leaves.push_back(V::leaf(random_tensor(rng, shape), true));
      const auto w = V::constant(random_tensor(rng, op.apply(leaves).shape()));
      auto loss = [&] { return ad::sum(ad::mul(op.apply(leaves), w)); };
      INFO(op.name << " point " << point);
      REQUIRE(ad::grad_check_leaves(loss, leaves) < 1e-5);
    }
  }
}

TEST_CASE("losses match finite differences", "[numerics][gradients][losses]") {
  Rng rng(77);
  const std::vector<int> labels{0, 2, 1, 2};
  auto logits = V::leaf(random_tensor(rng, {4, 3}, 2.0), true);
  REQUIRE(ad::grad_check_leaves([&] { return ad::cross_entropy(logits, labels); }, {logits}) < 1e-5);
  REQUIRE(ad::grad_check_leaves([&] { return ad::focal_loss(logits, labels, 2.0); }, {logits}) <
          1e-5);
  auto pred = V::leaf(random_tensor(rng, {3, 8}), true);
  const auto target = random_tensor(rng, {3, 8});
  REQUIRE(ad::grad_check_leaves([&] { return ad::mse(pred, target); }, {pred}) < 1e-5);
  REQUIRE(ad::grad_check_leaves([&] { return ad::sgcs_loss(pred, target); }, {pred}) < 1e-5);
}

TEST_CASE("grad_check", "[numerics][grad_check]") {
  const auto x = Tensor<double>({3}, {1, 2, 3});
  auto square_sum = [](const V& v) { return ad::sum(ad::mul(v, v)); };
  REQUIRE(ad::grad_check(square_sum, x) < 1e-9);

  auto leaf = V::leaf(x, true);
  ad::backward(square_sum(leaf));
  REQUIRE(leaf.grad().values() == std::vector<double>{2, 4, 6});

  // A constant function: the graph never touches x.
  auto constant = [](const V&) { return ad::sum(V::constant(Tensor<double>({1}, {3.0}))); };
  auto leaf2 = V::leaf(x, true);
  ad::backward(constant(leaf2));
  REQUIRE_FALSE(leaf2.has_grad());
  REQUIRE(ad::grad_check(constant, x) == 0.0);

  // the five-point stencil is exact on cubics; two points are off by h²
  auto cube_sum = [](const V& v) { return ad::sum(ad::mul(ad::mul(v, v), v)); };
  ad::GradCheckOptions coarse;
  coarse.step = 1e-2;
  REQUIRE(ad::grad_check(cube_sum, x, coarse) > 1e-5);
  coarse.fourth_order = true;
  REQUIRE(ad::grad_check(cube_sum, x, coarse) < 1e-9);
}

TEST_CASE("svd_principal", "[numerics][svd]") {
  SECTION("diagonal") {
    ComplexMatrix h(2, 2);
    h(0, 0) = 3.0;
    h(1, 1) = 1.0;
    const auto t = svd_principal(h);
    REQUIRE(t.sigma1 == Catch::Approx(3.0).epsilon(1e-12));
    REQUIRE(std::abs(t.u1[0] - cplx(1.0, 0.0)) < 1e-12);
    REQUIRE(std::abs(t.u1[1]) < 1e-12);
  }
  SECTION("rank one construction") {
    Rng rng(11);
    CVector u(5), v(7);
    for (auto& z : u) z = cplx(rng.normal(), rng.normal());
    for (auto& z : v) z = cplx(rng.normal(), rng.normal());
    const double nu = norm(u), nv = norm(v);
    for (auto& z : u) z /= nu;
    for (auto& z : v) z /= nv;
    ComplexMatrix h(5, 7);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j) h(i, j) = 2.0 * u[i] * std::conj(v[j]);
    const auto t = svd_principal(h);
    REQUIRE(t.sigma1 == Catch::Approx(2.0).epsilon(1e-12));
    REQUIRE(std::abs(std::abs(inner(t.u1, u)) - 1.0) < 1e-12);
    REQUIRE(std::abs(std::abs(inner(t.v1, v)) - 1.0) < 1e-12);
  }
  SECTION("random matrices against power iteration and eigen oracles") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed, {8, 16});
      const auto h = random_complex(rng, 8, 16);
      const auto t = svd_principal(h);
      REQUIRE(std::abs(norm(t.u1) - 1.0) < 1e-12);
      REQUIRE(std::abs(norm(t.v1) - 1.0) < 1e-12);
      const auto hv = h * t.v1;
      for (std::size_t i = 0; i < 8; ++i) REQUIRE(std::abs(hv[i] - t.sigma1 * t.u1[i]) < 1e-9);
      const auto oracle = power_iteration_oracle(h);
      REQUIRE(std::abs(inner(t.u1, oracle)) > 1.0 - 1e-8);

      // sigma1² is the top eigenvalue of hᴴh
      Eigen::MatrixXcd he(8, 16);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 16; ++j) he(i, j) = h(i, j);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(he.adjoint() * he);
      const double top = es.eigenvalues().maxCoeff();
      REQUIRE(std::abs(t.sigma1 * t.sigma1 - top) / top < 1e-9);

      // phase convention: largest-magnitude entry of u1 is real and positive
      std::size_t best = 0;
      for (std::size_t i = 1; i < 8; ++i)
        if (std::abs(t.u1[i]) > std::abs(t.u1[best])) best = i;
      REQUIRE(t.u1[best].imag() == 0.0);
      REQUIRE(t.u1[best].real() > 0.0);
    }
  }
  SECTION("tall matrices use the other gram matrix") {
    Rng rng(4);
    const auto h = random_complex(rng, 12, 3);
    const auto t = svd_principal(h);
    const auto hv = h * t.v1;
    for (std::size_t i = 0; i < 12; ++i) REQUIRE(std::abs(hv[i] - t.sigma1 * t.u1[i]) < 1e-9);
  }
  SECTION("all-zero input is degenerate") {
    const auto t = svd_principal(ComplexMatrix(3, 4));
    REQUIRE(t.degenerate);
    REQUIRE(t.sigma1 == 0.0);
    REQUIRE(t.u1[0] == cplx(1.0, 0.0));
  }
}

TEST_CASE("dft_codebook", "[numerics][dft]") {
  REQUIRE_THROWS_AS(dft_codebook(0), DimensionError);
  const auto a2 = dft_codebook(2);
  const double r = 1.0 / std::sqrt(2.0);
  REQUIRE(std::abs(a2(0, 0) - r) < 1e-15);
  REQUIRE(std::abs(a2(1, 0) - r) < 1e-15);
  REQUIRE(std::abs(a2(0, 1) - r) < 1e-15);
  REQUIRE(std::abs(a2(1, 1) + r) < 1e-15);

  for (std::size_t n : {1u, 4u, 8u, 16u}) {
    const auto a = dft_codebook(n);
    const auto gram = a.adjoint() * a;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const cplx expected = i == j ? 1.0 : 0.0;
        REQUIRE(std::abs(gram(i, j) - expected) < 1e-12);
      }
      REQUIRE(std::abs(norm(a.column(i)) - 1.0) < 1e-12);
      for (std::size_t m = 0; m < n; ++m)
        REQUIRE(std::abs(std::abs(a(m, i)) - 1.0 / std::sqrt(double(n))) < 1e-12);
    }
  }
}

TEST_CASE("sgcs helper", "[numerics][sgcs]") {
  CVector a{cplx(1, 0), cplx(0, 0)};
  CVector b{cplx(0, 0), cplx(0, 1)};
  REQUIRE(sgcs(a, b) == 0.0);
  REQUIRE(sgcs(a, CVector{cplx(0, 0), cplx(0, 0)}) == 0.0);
  CVector c{cplx(0, 3), cplx(0, 0)};
  REQUIRE(sgcs(a, c) == Catch::Approx(1.0).epsilon(1e-15));
}
