#include "impact/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace impact {

LayerStatsAccumulator::LayerStatsAccumulator(std::size_t d)
    : d_(d),
      sum_y_(d, 0.0),
      sum_yy_upper_(d, d),
      sum_grad_sq_(d, 0.0),
      sum_grad_sq_xnorm_(d, 0.0) {}

void LayerStatsAccumulator::accumulate(const Vector& y, const Vector& grad, double x_norm_sq) {
    if (y.size() != d_ || grad.size() != d_)
        throw DimensionError("accumulate: sample dims " + std::to_string(y.size()) + "/" +
                             std::to_string(grad.size()) + " vs accumulator dim " +
                             std::to_string(d_));
    if (!(x_norm_sq >= 0.0) || !std::isfinite(x_norm_sq))
        throw SampleError("accumulate: input norm must be finite and non-negative");
    for (std::size_t i = 0; i < d_; ++i)
        if (!std::isfinite(y[i]) || !std::isfinite(grad[i]))
            throw SampleError("accumulate: non-finite sample entry at index " +
                              std::to_string(i));

    n_ += 1;
    for (std::size_t i = 0; i < d_; ++i) {
        sum_y_[i] += y[i];
        const double g2 = grad[i] * grad[i];
        sum_grad_sq_[i] += g2;
        sum_grad_sq_xnorm_[i] += g2 * x_norm_sq;
        for (std::size_t j = i; j < d_; ++j) sum_yy_upper_(i, j) += y[i] * y[j];
    }
}

Matrix LayerStatsAccumulator::sum_yy() const {
    Matrix full(d_, d_);
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = i; j < d_; ++j) full(i, j) = full(j, i) = sum_yy_upper_(i, j);
    return full;
}

ProfiledLayer LayerStatsAccumulator::finalize() const {
    if (n_ < 2)
        throw SampleError("finalize: need at least 2 samples, have " + std::to_string(n_));

    ProfiledLayer prof;
    prof.d = d_;
    prof.n = n_;
    const double inv_n = 1.0 / static_cast<double>(n_);
    prof.mean = scale(sum_y_, inv_n);
    prof.grad_sq_mean = scale(sum_grad_sq_, inv_n);
    prof.fisher_row = scale(sum_grad_sq_xnorm_, inv_n);

    // Cov(y) = E[yy^T] - E[y]E[y]^T, symmetrized.
    const Matrix second_moment = scale(sum_yy(), inv_n);
    Matrix cov = sub(second_moment, outer(prof.mean, prof.mean));
    cov = scale(add(cov, transpose(cov)), 0.5);

    // Entries that are pure cancellation residue relative to the second
    // moment are clamped to zero, so constant dimensions give an exactly
    // zero (co)variance.
    for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = 0; j < d_; ++j) {
            const double scale_ij =
                std::sqrt(second_moment(i, i) * second_moment(j, j));
            if (std::abs(cov(i, j)) <= 1e-12 * scale_ij) cov(i, j) = 0.0;
        }
    }

    // One-pass moments can lose PSD-ness to cancellation; clamp the spectrum
    // at zero only when the predicate actually fails.
    const SymEigResult eig = sym_eig(cov);
    const double floor = -1e-8 * (1.0 + max_abs(cov));
    if (eig.eigenvalues.back() < floor) {
        Vector clamped = eig.eigenvalues;
        for (double& v : clamped) v = std::max(v, 0.0);
        // V diag(lambda+) V^T, re-symmetrized to keep the exact-symmetry invariant.
        Matrix rebuilt =
            matmul(eig.eigenvectors, scale_rows(transpose(eig.eigenvectors), clamped));
        cov = scale(add(rebuilt, transpose(rebuilt)), 0.5);
    }
    prof.cov = std::move(cov);
    return prof;
}

LayerStatsAccumulator merge(const LayerStatsAccumulator& a, const LayerStatsAccumulator& b) {
    if (a.d_ != b.d_)
        throw DimensionError("merge: accumulator dims " + std::to_string(a.d_) + " vs " +
                             std::to_string(b.d_));
    LayerStatsAccumulator out(a.d_);
    out.n_ = a.n_ + b.n_;
    out.sum_y_ = add(a.sum_y_, b.sum_y_);
    out.sum_yy_upper_ = add(a.sum_yy_upper_, b.sum_yy_upper_);
    out.sum_grad_sq_ = add(a.sum_grad_sq_, b.sum_grad_sq_);
    out.sum_grad_sq_xnorm_ = add(a.sum_grad_sq_xnorm_, b.sum_grad_sq_xnorm_);
    return out;
}

Vector normalized_grad_magnitudes(const ProfiledLayer& prof) {
    Vector mags(prof.d);
    for (std::size_t i = 0; i < prof.d; ++i) mags[i] = std::sqrt(prof.grad_sq_mean[i]);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    double total = 0.0;
    for (double m : mags) total += m;
    if (total <= 0.0)
        throw DomainError("normalized_grad_magnitudes: all gradient magnitudes are zero");
    const double mean = total / static_cast<double>(prof.d);
    for (double& m : mags) m /= mean;
    return mags;
}

}  // namespace impact
