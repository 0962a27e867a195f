#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "aimm/errors.hpp"

namespace aimm {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;

// Row-major complex matrix; std::complex<double> storage is the interleaved
// (re, im) layout.
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), entries_(rows * cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  cplx& operator()(std::size_t r, std::size_t c) noexcept { return entries_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const noexcept {
    return entries_[r * cols_ + c];
  }
  const CVector& entries() const noexcept { return entries_; }
  CVector& entries() noexcept { return entries_; }

  CVector column(std::size_t c) const;
  void set_column(std::size_t c, const CVector& v);
  ComplexMatrix adjoint() const;

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  CVector entries_;
};

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);
CVector operator*(const ComplexMatrix& a, const CVector& x);

// aᴴ b
cplx inner(const CVector& a, const CVector& b);
double norm(const CVector& a);
// |aᴴb|² / (‖a‖²‖b‖²); 0 when either vector is zero.
double sgcs(const CVector& a, const CVector& b);

struct PrincipalTriple {
  double sigma1 = 0.0;
  CVector u1;
  CVector v1;
  bool degenerate = false;
  int iterations = 0;
};

// Largest singular value and its singular vectors, by power iteration on the
// smaller Gram matrix (h·hᴴ when rows ≤ cols, else hᴴ·h). The entry of u1
// with largest modulus is rotated to be real and positive. An all-zero input
// yields sigma1 = 0, u1 = v1 = e₁ and degenerate = true.
PrincipalTriple svd_principal(const ComplexMatrix& h, int max_iterations = 500,
                              double tolerance = 1e-12);

// Column k holds exp(−j·2π·m·k/n)/√n for m = 0..n−1.
ComplexMatrix dft_codebook(std::size_t n);

}  // namespace aimm
