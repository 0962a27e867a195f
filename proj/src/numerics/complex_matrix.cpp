#include "aimm/numerics/complex_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace aimm {

CVector ComplexMatrix::column(std::size_t c) const {
  CVector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

void ComplexMatrix::set_column(std::size_t c, const CVector& v) {
  if (v.size() != rows_) throw DimensionError("set_column: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

ComplexMatrix ComplexMatrix::adjoint() const {
  ComplexMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
  return out;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("complex matmul: inner dimensions disagree");
  ComplexMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

CVector operator*(const ComplexMatrix& a, const CVector& x) {
  if (a.cols() != x.size()) throw DimensionError("complex matvec: length mismatch");
  CVector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    cplx acc = 0;
    for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * x[k];
    out[i] = acc;
  }
  return out;
}

cplx inner(const CVector& a, const CVector& b) {
  if (a.size() != b.size()) throw DimensionError("inner: length mismatch");
  cplx acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double norm(const CVector& a) {
  double ss = 0;
  for (const auto& z : a) ss += std::norm(z);
  return std::sqrt(ss);
}

double sgcs(const CVector& a, const CVector& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::norm(inner(a, b)) / (na * na * nb * nb);
}

namespace {

void normalize(CVector& v) {
  const double n = norm(v);
  for (auto& z : v) z /= n;
}

void fix_phase(CVector& u, CVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < u.size(); ++i)
    if (std::abs(u[i]) > std::abs(u[best])) best = i;
  const cplx rot = std::conj(u[best]) / std::abs(u[best]);
  for (auto& z : u) z *= rot;
  for (auto& z : v) z *= rot;
  u[best] = cplx(std::abs(u[best]), 0.0);
}

// Dominant eigenvector of a Hermitian PSD matrix.
CVector dominant_eigenvector(const ComplexMatrix& g, int max_iterations, double tolerance,
                             int& iterations) {
  const std::size_t n = g.rows();
  // Start from the column with largest norm: never orthogonal to the
  // dominant eigenvector unless g is zero.
  std::size_t start = 0;
  double best = -1.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double cn = norm(g.column(c));
    if (cn > best) {
      best = cn;
      start = c;
    }
  }
  CVector x = g.column(start);
  normalize(x);
  iterations = 0;
  for (int it = 0; it < max_iterations; ++it) {
    CVector y = g * x;
    normalize(y);
    double diff = 0;
    for (std::size_t i = 0; i < n; ++i) diff += std::norm(y[i] - x[i]);
    x = std::move(y);
    iterations = it + 1;
    if (std::sqrt(diff) < tolerance) break;
  }
  return x;
}

}  // namespace

PrincipalTriple svd_principal(const ComplexMatrix& h, int max_iterations, double tolerance) {
  if (h.rows() == 0 || h.cols() == 0) throw DimensionError("svd_principal: empty matrix");
  PrincipalTriple out;
  const bool all_zero = std::all_of(h.entries().begin(), h.entries().end(),
                                    [](const cplx& z) { return z == cplx(0.0, 0.0); });
  if (all_zero) {
    out.degenerate = true;
    out.u1.assign(h.rows(), 0.0);
    out.v1.assign(h.cols(), 0.0);
    out.u1[0] = 1.0;
    out.v1[0] = 1.0;
    return out;
  }
  const ComplexMatrix ha = h.adjoint();
  if (h.rows() <= h.cols()) {
    out.u1 = dominant_eigenvector(h * ha, max_iterations, tolerance, out.iterations);
    out.v1 = ha * out.u1;
    out.sigma1 = norm(out.v1);
    for (auto& z : out.v1) z /= out.sigma1;
  } else {
    out.v1 = dominant_eigenvector(ha * h, max_iterations, tolerance, out.iterations);
    out.u1 = h * out.v1;
    out.sigma1 = norm(out.u1);
    for (auto& z : out.u1) z /= out.sigma1;
  }
  fix_phase(out.u1, out.v1);
  return out;
}

ComplexMatrix dft_codebook(std::size_t n) {
  if (n == 0) throw DimensionError("dft_codebook: n must be at least 1");
  ComplexMatrix a(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < n; ++k) {
      // reduce m·k mod n first so the angle stays small and exact
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((m * k) % n) /
                           static_cast<double>(n);
      a(m, k) = std::polar(scale, phase);
    }
  return a;
}

}  // namespace aimm
