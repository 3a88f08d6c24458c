#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "impact/errors.hpp"

namespace impact {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit floats. Zero-sized dimensions are legal
/// (an empty basis is a d x 0 matrix).
class Matrix {
  public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, Vector data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    Vector row(std::size_t i) const;
    Vector col(std::size_t j) const;

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

// ---------------------------------------------------------------------------
// Dense kernels. All are pure functions; shape mismatches throw DimensionError.
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
Matrix transpose(const Matrix& a);

Matrix hadamard(const Matrix& a, const Matrix& b);
Vector hadamard(const Vector& a, const Vector& b);
/// Elementwise division; divisor entries must satisfy |d_i| >= 1e-300.
Matrix hadamard_div(const Matrix& a, const Matrix& b);
Vector hadamard_div(const Vector& a, const Vector& b);

Matrix outer(const Vector& u, const Vector& v);

double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);

double dot(const Vector& a, const Vector& b);
double norm_sq(const Vector& a);
double norm(const Vector& a);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scale(const Vector& a, double s);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double max_abs(const Matrix& a);
double max_abs(const Vector& a);

/// Scale row i of m by v[i] / divide row i by v[i] (broadcast Hadamard with
/// a column vector).
Matrix scale_rows(const Matrix& m, const Vector& v);
Matrix div_rows(const Matrix& m, const Vector& v);

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct SymEigResult {
    Vector eigenvalues;   // descending; ties keep original diagonal order
    Matrix eigenvectors;  // columns aligned with eigenvalues, orthonormal
};

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// The input is symmetrized as (A + A^T)/2 first; asymmetry beyond
/// 1e-9 * (1 + max|A|) is rejected. Convergence: off-diagonal Frobenius norm
/// <= 1e-12 * ||A||_F within 100 sweeps. Sign convention: the
/// largest-magnitude component of each eigenvector is positive, so results
/// are reproducible bit-for-bit for a fixed input.
SymEigResult sym_eig(const Matrix& a);

struct TruncatedSvd {
    Matrix u;  // rows x r
    Vector s;  // r singular values, non-increasing, non-negative
    Matrix v;  // cols x r
};

/// Best rank-r approximation W ~ U diag(S) V^T, computed from the symmetric
/// eigendecomposition of the smaller Gram matrix (W W^T or W^T W), with the
/// other side's singular vectors recovered by projection.
TruncatedSvd truncated_svd(const Matrix& w, std::size_t r);

}  // namespace impact
