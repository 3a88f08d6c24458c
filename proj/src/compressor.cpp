#include "impact/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace impact {

Vector FactoredLayer::forward(const Vector& x) const {
    return add(matvec(w2, matvec(w1, x)), b_prime);
}

Vector transform_coeff(const Vector& grad_sq_mean, double eta, double a_floor) {
    if (eta < 0.0 || eta > 1.0)
        throw ConfigError("transform_coeff: eta must lie in [0, 1], got " + std::to_string(eta));
    if (!(a_floor > 0.0))
        throw ConfigError("transform_coeff: a_floor must be positive");
    const std::size_t d = grad_sq_mean.size();
    if (d == 0) throw DimensionError("transform_coeff: empty gradient vector");

    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(grad_sq_mean[i] >= 0.0) || !std::isfinite(grad_sq_mean[i]))
            throw DomainError("transform_coeff: squared gradients must be finite and >= 0");
        total += grad_sq_mean[i];
    }
    if (total <= 0.0 && eta == 0.0)
        throw DomainError(
            "transform_coeff: eta = 0 with all-zero gradients leaves no important direction");

    const double mean_g = total / static_cast<double>(d);
    Vector a(d);
    for (std::size_t i = 0; i < d; ++i) {
        // All-zero gradients carry no per-dimension signal; the uniform ratio
        // 1 gives a = 1, matching the uniform-G case.
        const double ratio = mean_g > 0.0 ? grad_sq_mean[i] / mean_g : 1.0;
        a[i] = std::max(std::sqrt((1.0 - eta) * ratio + eta), a_floor);
    }
    return a;
}

Matrix weighted_cov(const ProfiledLayer& prof, const Vector& a) {
    if (a.size() != prof.d)
        throw DimensionError("weighted_cov: coefficient length " + std::to_string(a.size()) +
                             " vs layer dim " + std::to_string(prof.d));
    return hadamard(prof.cov, outer(a, a));
}

std::size_t energy_rank(const Vector& eigenvalues_desc, double keep_ratio) {
    if (!(keep_ratio > 0.0) || keep_ratio > 100.0)
        throw ConfigError("energy_rank: keep_ratio must lie in (0, 100], got " +
                          std::to_string(keep_ratio));
    const std::size_t d = eigenvalues_desc.size();
    Vector roots(d);
    double total = 0.0;
    std::size_t positive = 0;
    for (std::size_t j = 0; j < d; ++j) {
        roots[j] = std::sqrt(std::max(eigenvalues_desc[j], 0.0));
        total += roots[j];
        if (roots[j] > 0.0) positive = j + 1;
    }
    if (total <= 0.0) throw DomainError("energy_rank: all eigenvalues are zero");

    const double threshold = keep_ratio / 100.0;
    double partial = 0.0;
    for (std::size_t r = 1; r <= d; ++r) {
        partial += roots[r - 1];
        if (partial / total >= threshold) return r;
    }
    return positive;  // rounding never reaches the threshold: keep every positive mode
}

BasisSelection reconstruction_basis(const Matrix& c, const ImpactConfig& cfg) {
    const SymEigResult eig = sym_eig(c);
    const std::size_t d = c.rows();

    BasisSelection basis;
    basis.eigenvalues = eig.eigenvalues;
    for (double& v : basis.eigenvalues) v = std::max(v, 0.0);
    if (std::all_of(basis.eigenvalues.begin(), basis.eigenvalues.end(),
                    [](double v) { return v == 0.0; }))
        throw DomainError("reconstruction_basis: degenerate covariance, all eigenvalues zero");

    if (cfg.explicit_rank) {
        const std::size_t r = *cfg.explicit_rank;
        if (r < 1 || r > d)
            throw RankError("reconstruction_basis: explicit rank " + std::to_string(r) +
                            " out of [1, " + std::to_string(d) + "]");
        basis.rank = r;
    } else {
        basis.rank = energy_rank(basis.eigenvalues, cfg.keep_ratio);
    }

    double total = 0.0, partial = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double root = std::sqrt(basis.eigenvalues[j]);
        total += root;
        if (j < basis.rank) partial += root;
    }
    basis.energy_fraction = partial / total;

    basis.u = Matrix(d, basis.rank);
    for (std::size_t j = 0; j < basis.rank; ++j)
        for (std::size_t i = 0; i < d; ++i) basis.u(i, j) = eig.eigenvectors(i, j);
    return basis;
}

namespace {

std::optional<FactoredLayer> factorize_weighted(const Matrix& w, const Vector& b,
                                                const ProfiledLayer& prof,
                                                const ImpactConfig& cfg, Provenance provenance) {
    const std::size_t d = w.rows();
    const std::size_t n = w.cols();
    if (prof.d != d)
        throw DimensionError("factorize: layer rows " + std::to_string(d) +
                             " vs profiled dim " + std::to_string(prof.d));
    if (b.size() != d)
        throw DimensionError("factorize: bias length " + std::to_string(b.size()) +
                             " vs layer rows " + std::to_string(d));

    const Vector a = transform_coeff(prof.grad_sq_mean, cfg.eta, cfg.a_floor);
    const Matrix c = weighted_cov(prof, a);
    const BasisSelection basis = reconstruction_basis(c, cfg);
    const std::size_t r = basis.rank;

    if (cfg.replace_only_if_smaller && r * (n + d) >= d * n) return std::nullopt;

    FactoredLayer out;
    out.rank = r;
    out.provenance = std::move(provenance);

    // W1 = (U o a1^T)^T W,  W2 = U oslash a1^T
    out.w1 = matmul(transpose(scale_rows(basis.u, a)), w);
    out.w2 = div_rows(basis.u, a);

    // b' = E[y] + (U U^T o (1/a a^T)) (b - E[y])
    Vector inv_a(d);
    for (std::size_t i = 0; i < d; ++i) inv_a[i] = 1.0 / a[i];
    const Matrix projector = hadamard(matmul(basis.u, transpose(basis.u)), outer(inv_a, a));
    out.b_prime = add(prof.mean, matvec(projector, sub(b, prof.mean)));
    return out;
}

}  // namespace

std::optional<FactoredLayer> factorize_impact(const Matrix& w, const Vector& b,
                                              const ProfiledLayer& prof,
                                              const ImpactConfig& cfg) {
    Provenance prov{"impact", cfg.eta, cfg.explicit_rank ? 0.0 : cfg.keep_ratio, ""};
    return factorize_weighted(w, b, prof, cfg, std::move(prov));
}

std::optional<FactoredLayer> afm_factorize(const Matrix& w, const Vector& b,
                                           const ProfiledLayer& prof, const ImpactConfig& cfg) {
    ImpactConfig uniform = cfg;
    uniform.eta = 1.0;
    Provenance prov{"afm", 1.0, cfg.explicit_rank ? 0.0 : cfg.keep_ratio,
                    "mean-centered activation covariance basis"};
    return factorize_weighted(w, b, prof, uniform, std::move(prov));
}

FactoredLayer svd_factorize(const Matrix& w, const Vector& b, std::size_t r) {
    if (b.size() != w.rows())
        throw DimensionError("svd_factorize: bias length " + std::to_string(b.size()) +
                             " vs layer rows " + std::to_string(w.rows()));
    const TruncatedSvd svd = truncated_svd(w, r);
    FactoredLayer out;
    out.rank = r;
    out.w1 = scale_rows(transpose(svd.v), svd.s);  // diag(S) V^T
    out.w2 = svd.u;
    out.b_prime = b;
    out.provenance = Provenance{"svd", 0.0, 0.0, ""};
    return out;
}

FactoredLayer fwsvd_factorize(const Matrix& w, const Vector& b, const ProfiledLayer& prof,
                              std::size_t r) {
    if (!prof.fisher_row)
        throw ConfigError("fwsvd_factorize: profiled statistics carry no fisher_row");
    if (prof.fisher_row->size() != w.rows() || b.size() != w.rows())
        throw DimensionError("fwsvd_factorize: fisher_row/bias length vs layer rows mismatch");

    constexpr double kEps = 1e-12;
    const std::size_t d = w.rows();
    Vector weights(d), inv_weights(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double f = (*prof.fisher_row)[i];
        if (!(f >= 0.0) || !std::isfinite(f))
            throw DomainError("fwsvd_factorize: fisher_row entries must be finite and >= 0");
        weights[i] = std::sqrt(f + kEps);
        inv_weights[i] = 1.0 / weights[i];
    }

    const TruncatedSvd svd = truncated_svd(scale_rows(w, weights), r);
    FactoredLayer out;
    out.rank = r;
    out.w1 = scale_rows(transpose(svd.v), svd.s);
    out.w2 = scale_rows(svd.u, inv_weights);  // D^-1 U_r
    out.b_prime = b;
    out.provenance = Provenance{"fwsvd", 0.0, 0.0, "row-fisher diagonal weighting"};
    return out;
}

double objective_h(const std::vector<Vector>& samples, const ProfiledLayer& prof,
                   const Vector& a, const Matrix& u) {
    if (samples.empty()) throw ConfigError("objective_h: no samples");
    if (a.size() != prof.d || u.rows() != prof.d)
        throw DimensionError("objective_h: coefficient/basis dims vs layer dim mismatch");
    if (u.cols() > 0) {
        const Matrix gram = matmul(transpose(u), u);
        if (max_abs(sub(gram, Matrix::identity(u.cols()))) > 1e-8)
            throw DomainError("objective_h: basis columns are not orthonormal");
    }

    const Matrix ut = transpose(u);
    double acc = 0.0;
    for (const Vector& y : samples) {
        if (y.size() != prof.d)
            throw DimensionError("objective_h: sample dim " + std::to_string(y.size()) +
                                 " vs layer dim " + std::to_string(prof.d));
        const Vector ty = hadamard(a, sub(y, prof.mean));
        const Vector residual = sub(ty, matvec(u, matvec(ut, ty)));
        acc += norm_sq(residual);
    }
    return acc / static_cast<double>(samples.size());
}

double objective_h_closed_form(const Matrix& c, const BasisSelection& basis) {
    double retained = 0.0;
    for (std::size_t k = 0; k < basis.rank; ++k) retained += basis.eigenvalues[k];
    return trace(c) - retained;
}

double objective_f(const std::vector<std::pair<Vector, Vector>>& pairs,
                   const std::function<double(const Vector&)>& loss, double alpha, double beta) {
    if (pairs.empty()) throw ConfigError("objective_f: no sample pairs");
    double recon = 0.0, drift = 0.0;
    for (const auto& [y, y_hat] : pairs) {
        if (y.size() != y_hat.size())
            throw DimensionError("objective_f: paired activations have different lengths");
        recon += norm_sq(sub(y, y_hat));
        const double delta = loss(y) - loss(y_hat);
        drift += delta * delta;
    }
    const double count = static_cast<double>(pairs.size());
    return alpha * recon / count + beta * drift / count;
}

}  // namespace impact
