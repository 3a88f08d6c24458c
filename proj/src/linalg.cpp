#include "impact/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace impact {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    for (double v : data_)
        if (!std::isfinite(v)) throw DataError("non-finite entry in matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Vector data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows in matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Vector Matrix::row(std::size_t i) const {
    Vector out(cols_);
    for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
    return out;
}

Vector Matrix::col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: " + dims(a) + " * " + dims(b));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
    require(a.cols() == x.size(),
            "matvec: " + dims(a) + " * vector of length " + std::to_string(x.size()));
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "hadamard: " + dims(a) + " vs " + dims(b));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "hadamard: vector lengths " + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()));
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

namespace {
double checked_div(double num, double den, std::size_t i) {
    if (std::abs(den) < 1e-300)
        throw DomainError("elementwise division by (near-)zero entry at index " +
                          std::to_string(i));
    return num / den;
}
}  // namespace

Matrix hadamard_div(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "hadamard_div: " + dims(a) + " vs " + dims(b));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.data()[i] = checked_div(a.data()[i], b.data()[i], i);
    return out;
}

Vector hadamard_div(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "hadamard_div: vector lengths " +
                                      std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = checked_div(a[i], b[i], i);
    return out;
}

Matrix outer(const Vector& u, const Vector& v) {
    Matrix out(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
    return out;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

double trace(const Matrix& a) {
    require(a.rows() == a.cols(), "trace: matrix " + dims(a) + " is not square");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, i);
    return acc;
}

double dot(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "dot: vector lengths " + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm_sq(const Vector& a) { return dot(a, a); }
double norm(const Vector& a) { return std::sqrt(norm_sq(a)); }

Vector add(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "add: vector lengths differ");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector sub(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "sub: vector lengths differ");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector scale(const Vector& a, double s) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: " + dims(a) + " vs " + dims(b));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: " + dims(a) + " vs " + dims(b));
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    return out;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs(const Vector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

Matrix scale_rows(const Matrix& m, const Vector& v) {
    require(m.rows() == v.size(), "scale_rows: " + dims(m) + " vs vector of length " +
                                      std::to_string(v.size()));
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * v[i];
    return out;
}

Matrix div_rows(const Matrix& m, const Vector& v) {
    require(m.rows() == v.size(), "div_rows: " + dims(m) + " vs vector of length " +
                                      std::to_string(v.size()));
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (std::abs(v[i]) < 1e-300)
            throw DomainError("div_rows: (near-)zero divisor at row " + std::to_string(i));
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / v[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxSweeps = 100;

double offdiag_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) acc += a(i, j) * a(i, j);
    return std::sqrt(acc);
}

// One Jacobi rotation zeroing a(p,q), accumulated into v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const double apq = a(p, q);
    if (apq == 0.0) return;
    const double app = a(p, p);
    const double aqq = a(q, q);

    const double theta = (aqq - app) / (2.0 * apq);
    double t;
    if (std::isinf(theta)) {
        t = 0.0;  // apq is denormal-tiny relative to the diagonal gap
    } else {
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    }
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;

    const std::size_t n = a.rows();
    for (std::size_t k = 0; k < n; ++k) {
        if (k == p || k == q) continue;
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = a(p, k) = c * akp - s * akq;
        a(k, q) = a(q, k) = s * akp + c * akq;
    }
    a(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a(p, q) = a(q, p) = 0.0;

    for (std::size_t k = 0; k < n; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
    }
}

}  // namespace

SymEigResult sym_eig(const Matrix& input) {
    if (input.rows() != input.cols())
        throw DimensionError("sym_eig: matrix " + dims(input) + " is not square");
    const std::size_t n = input.rows();

    const Matrix at = transpose(input);
    const double asym = max_abs(sub(input, at));
    if (asym > 1e-9 * (1.0 + max_abs(input)))
        throw DomainError("sym_eig: input asymmetry " + std::to_string(asym) +
                          " exceeds tolerance");

    Matrix a = scale(add(input, at), 0.5);
    Matrix v = Matrix::identity(n);
    const double target = 1e-12 * frobenius_norm(a);

    double off = offdiag_norm(a);
    int sweep = 0;
    while (off > target) {
        if (sweep++ >= kMaxSweeps)
            throw ConvergenceError("sym_eig: off-diagonal residual " + std::to_string(off) +
                                   " after " + std::to_string(kMaxSweeps) + " sweeps (target " +
                                   std::to_string(target) + ")");
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
        off = offdiag_norm(a);
    }

    // Sort descending; stable so equal eigenvalues keep diagonal order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEigResult result;
    result.eigenvalues.resize(n);
    result.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        result.eigenvalues[j] = a(src, src);

        // Sign convention: largest-magnitude component positive (first such
        // entry on exact magnitude ties).
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::abs(v(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double flip = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, j) = flip * v(i, src);
    }
    return result;
}

TruncatedSvd truncated_svd(const Matrix& w, std::size_t r) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    if (r < 1 || r > std::min(m, n))
        throw RankError("truncated_svd: rank " + std::to_string(r) + " out of [1, " +
                        std::to_string(std::min(m, n)) + "] for " + dims(w));

    // Eigendecompose the smaller Gram matrix; recover the other side by
    // projecting W onto each singular vector and dividing by sigma.
    const bool rows_side = m <= n;
    const Matrix gram = rows_side ? matmul(w, transpose(w)) : matmul(transpose(w), w);
    const SymEigResult eig = sym_eig(gram);

    TruncatedSvd out;
    out.s.resize(r);
    out.u = Matrix(m, r);
    out.v = Matrix(n, r);
    const Matrix wt = transpose(w);
    for (std::size_t k = 0; k < r; ++k) {
        const double sigma = std::sqrt(std::max(eig.eigenvalues[k], 0.0));
        out.s[k] = sigma;
        Vector base = eig.eigenvectors.col(k);
        if (rows_side) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = base[i];
            Vector proj = matvec(wt, base);  // W^T u_k = sigma v_k
            if (sigma > 0.0) {
                for (std::size_t i = 0; i < n; ++i) out.v(i, k) = proj[i] / sigma;
            }  // sigma == 0: leave v column zero; it contributes nothing
        } else {
            for (std::size_t i = 0; i < n; ++i) out.v(i, k) = base[i];
            Vector proj = matvec(w, base);  // W v_k = sigma u_k
            if (sigma > 0.0) {
                for (std::size_t i = 0; i < m; ++i) out.u(i, k) = proj[i] / sigma;
            }
        }
    }
    return out;
}

}  // namespace impact
