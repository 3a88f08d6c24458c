#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "impact/linalg.hpp"
#include "impact/profiler.hpp"

namespace impact {

/// Knobs for importance-aware factorization.
struct ImpactConfig {
    double eta = 0.5;          // blend between gradient importance (0) and uniform (1)
    double keep_ratio = 100.0; // percent of sqrt-eigenvalue energy to retain, (0, 100]
    std::optional<std::size_t> explicit_rank;  // overrides the energy rule
    double a_floor = 1e-6;     // lower bound on transformation coefficients
    bool replace_only_if_smaller = true;  // skip substitution unless r(n+d) < dn
};

struct Provenance {
    std::string method;  // impact | svd | fwsvd | afm
    double eta = 0.0;
    double keep_ratio = 0.0;
    std::string note;

    bool operator==(const Provenance&) const = default;
};

/// Two linear layers (W1, W2, b') replacing a dense layer (W, b):
/// forward(x) = W2 (W1 x) + b'.
struct FactoredLayer {
    Matrix w1;       // r x n
    Matrix w2;       // d x r
    Vector b_prime;  // d
    std::size_t rank = 0;
    Provenance provenance;

    std::size_t in_dim() const { return w1.cols(); }
    std::size_t out_dim() const { return w2.rows(); }
    std::size_t param_count() const { return w1.size() + w2.size() + b_prime.size(); }
    Vector forward(const Vector& x) const;
};

/// Top eigenvectors of the weighted covariance plus the full clamped spectrum.
struct BasisSelection {
    Matrix u;            // d x r, orthonormal columns
    Vector eigenvalues;  // full spectrum, descending, clamped at 0
    std::size_t rank = 0;
    double energy_fraction = 0.0;  // achieved cumulative sqrt-eigenvalue fraction
};

/// Transformation coefficient a_i = sqrt((1-eta) * G_i / mean(G) + eta),
/// floored elementwise at a_floor. G is the mean squared gradient per
/// dimension. eta = 0 with all-zero G is degenerate (no direction is
/// important) and throws.
Vector transform_coeff(const Vector& grad_sq_mean, double eta, double a_floor = 1e-6);

/// Importance-weighted activation covariance C = Cov(y) o (a a^T).
/// Symmetric by construction; PSD by the Schur product theorem.
Matrix weighted_cov(const ProfiledLayer& prof, const Vector& a);

/// Smallest r with (sum_{j<=r} sqrt(l_j)) / (sum_{j<=d} sqrt(l_j)) >= keep_ratio/100.
/// Eigenvalues must be sorted descending; negatives are clamped to 0 first.
std::size_t energy_rank(const Vector& eigenvalues_desc, double keep_ratio);

BasisSelection reconstruction_basis(const Matrix& c, const ImpactConfig& cfg);

/// Importance-aware factorization of a dense layer y = Wx + b using the
/// profiled statistics. Returns nullopt when replace_only_if_smaller is set
/// and the factored form would not shrink the layer.
std::optional<FactoredLayer> factorize_impact(const Matrix& w, const Vector& b,
                                              const ProfiledLayer& prof,
                                              const ImpactConfig& cfg);

/// Activation-covariance factorization: the eta = 1 special case (uniform
/// transformation coefficients, C = Cov(y)).
std::optional<FactoredLayer> afm_factorize(const Matrix& w, const Vector& b,
                                           const ProfiledLayer& prof, const ImpactConfig& cfg);

/// Plain truncated-SVD weight factorization at rank r.
FactoredLayer svd_factorize(const Matrix& w, const Vector& b, std::size_t r);

/// Row-importance weighted SVD: D = diag(sqrt(fisher_row + eps)), factor D W
/// and fold D^-1 into W2, minimizing ||D (W - W2 W1)||_F at rank r.
FactoredLayer fwsvd_factorize(const Matrix& w, const Vector& b, const ProfiledLayer& prof,
                              std::size_t r);

/// Residual energy of the transformed activations outside span(U):
/// mean over samples of || (I - U U^T) a o (y - E[y]) ||^2. U must be
/// orthonormal. Always >= 0.
double objective_h(const std::vector<Vector>& samples, const ProfiledLayer& prof,
                   const Vector& a, const Matrix& u);

/// Closed form of objective_h on the profiling set itself:
/// trace(C) - sum of the top-r eigenvalues.
double objective_h_closed_form(const Matrix& c, const BasisSelection& basis);

/// alpha * mean ||y - y_hat||^2 + beta * mean (loss(y) - loss(y_hat))^2
/// over paired original/reconstructed activations.
double objective_f(const std::vector<std::pair<Vector, Vector>>& pairs,
                   const std::function<double(const Vector&)>& loss, double alpha, double beta);

}  // namespace impact
