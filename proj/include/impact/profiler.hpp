#pragma once

#include <cstddef>
#include <optional>

#include "impact/linalg.hpp"

namespace impact {

/// Finalized per-layer statistics: everything the compression stage needs.
struct ProfiledLayer {
    std::size_t d = 0;
    std::size_t n = 0;
    Vector mean;                       // E[y]
    Matrix cov;                        // Cov(y), symmetric, numerically PSD
    Vector grad_sq_mean;               // E[(dl/dy)^2], elementwise
    std::optional<Vector> fisher_row;  // E[g_i^2 * ||x||^2], row importance
};

/// Streaming sums over activation/gradient samples for one layer.
///
/// Only the upper triangle of the second-moment sum is accumulated; the full
/// symmetric matrix is materialized on read. Accumulators are single-writer;
/// shard samples across independent accumulators and merge() for parallel
/// profiling.
class LayerStatsAccumulator {
  public:
    explicit LayerStatsAccumulator(std::size_t d);

    /// Add one sample: pre-activation y, gradient dl/dy, squared norm of the
    /// layer input. Non-finite samples are rejected.
    void accumulate(const Vector& y, const Vector& grad, double x_norm_sq);

    /// mean / cov / grad_sq_mean / fisher_row from the accumulated sums.
    /// Requires n >= 2.
    ProfiledLayer finalize() const;

    std::size_t dim() const { return d_; }
    std::size_t count() const { return n_; }
    const Vector& sum_y() const { return sum_y_; }
    const Vector& sum_grad_sq() const { return sum_grad_sq_; }
    const Vector& sum_grad_sq_xnorm() const { return sum_grad_sq_xnorm_; }
    /// Full (mirrored) second-moment sum.
    Matrix sum_yy() const;

    friend LayerStatsAccumulator merge(const LayerStatsAccumulator& a,
                                       const LayerStatsAccumulator& b);

  private:
    std::size_t d_ = 0;
    std::size_t n_ = 0;
    Vector sum_y_;
    Matrix sum_yy_upper_;  // upper triangle only (incl. diagonal)
    Vector sum_grad_sq_;
    Vector sum_grad_sq_xnorm_;
};

/// Field-wise sum of two accumulators over the same dimension. Commutative
/// and associative up to floating-point reassociation.
LayerStatsAccumulator merge(const LayerStatsAccumulator& a, const LayerStatsAccumulator& b);

/// Per-dimension RMS gradient magnitudes sqrt(grad_sq_mean_i), sorted
/// descending and normalized by their mean, so the values sum to d. The
/// gradient-heterogeneity diagnostic rows.
Vector normalized_grad_magnitudes(const ProfiledLayer& prof);

}  // namespace impact
