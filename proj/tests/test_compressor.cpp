#include <doctest.h>

#include <cmath>

#include "impact/compressor.hpp"
#include "impact/profiler.hpp"
#include "impact/rng.hpp"
#include "oracles.hpp"

using namespace impact;

namespace {

struct ProfiledInstance {
    ProfiledLayer prof;
    std::vector<Vector> samples;
};

ProfiledInstance profile_samples(const std::vector<Vector>& samples, const Vector& grad_sq) {
    const std::size_t d = samples.front().size();
    LayerStatsAccumulator acc(d);
    Vector g(d);
    for (std::size_t i = 0; i < d; ++i) g[i] = std::sqrt(grad_sq[i]);
    for (const auto& y : samples) acc.accumulate(y, g, 1.0);
    ProfiledInstance inst;
    inst.prof = acc.finalize();
    inst.samples = samples;
    return inst;
}

ProfiledLayer synthetic_prof(Vector mean, Matrix cov, Vector grad_sq) {
    ProfiledLayer prof;
    prof.d = mean.size();
    prof.n = 100;
    prof.mean = std::move(mean);
    prof.cov = std::move(cov);
    prof.grad_sq_mean = std::move(grad_sq);
    return prof;
}

}  // namespace

// ---------------------------------------------------------------------------
// transform_coeff
// ---------------------------------------------------------------------------

TEST_CASE("eta = 1 gives all-ones coefficients for any gradient profile") {
    CHECK(transform_coeff({5.0, 0.0, 123.0}, 1.0) == Vector{1.0, 1.0, 1.0});
    CHECK(transform_coeff({0.0, 0.0}, 1.0) == Vector{1.0, 1.0});
}

TEST_CASE("eta = 0 with uniform gradients gives all-ones") {
    CHECK(max_abs(sub(transform_coeff({3.0, 3.0, 3.0, 3.0}, 0.0), Vector(4, 1.0))) <= 1e-15);
}

TEST_CASE("eta = 0 with G = (3, 1)") {
    const Vector a = transform_coeff({3.0, 1.0}, 0.0);
    CHECK(a[0] == doctest::Approx(1.2247448713915890).epsilon(1e-15));  // sqrt(1.5)
    CHECK(a[1] == doctest::Approx(0.70710678118654757).epsilon(1e-15)); // sqrt(0.5)
}

TEST_CASE("eta = 0 with all-zero gradients is degenerate") {
    CHECK_THROWS_AS(transform_coeff({0.0, 0.0}, 0.0), DomainError);
}

TEST_CASE("coefficients are floored") {
    // One zero-gradient dimension at eta = 0 would give a_i = 0 exactly.
    const Vector a = transform_coeff({2.0, 0.0}, 0.0, 1e-6);
    CHECK(a[1] == 1e-6);
    CHECK(a[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(transform_coeff({1.0}, -0.1), ConfigError);
    CHECK_THROWS_AS(transform_coeff({1.0}, 1.5), ConfigError);
    CHECK_THROWS_AS(transform_coeff({-1.0}, 0.5), DomainError);
}

// ---------------------------------------------------------------------------
// weighted_cov
// ---------------------------------------------------------------------------

TEST_CASE("all-ones coefficients leave the covariance unchanged") {
    Rng rng(31);
    const auto inst =
        profile_samples(oracle::random_activation_samples(rng, 4, 50), Vector(4, 1.0));
    const Matrix c = weighted_cov(inst.prof, Vector(4, 1.0));
    CHECK(c == inst.prof.cov);
}

TEST_CASE("weighted_cov elementwise arithmetic") {
    const ProfiledLayer prof = synthetic_prof(
        {0.0, 0.0}, Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}}), {1.0, 1.0});
    const Matrix c = weighted_cov(prof, {2.0, 1.0});
    CHECK(c == Matrix::from_rows({{4.0, 0.0}, {0.0, 0.0}}));
    CHECK_THROWS_AS(weighted_cov(prof, Vector{1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("weighted covariance stays PSD (Schur product)") {
    Rng rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst =
            profile_samples(oracle::random_activation_samples(rng, 6, 80),
                            oracle::random_vector(rng, 6, 0.0, 4.0));
        const Vector a = transform_coeff(inst.prof.grad_sq_mean, rng.uniform(0.0, 1.0));
        const Matrix c = weighted_cov(inst.prof, a);
        CHECK(c == transpose(c));  // exact symmetry by construction
        const SymEigResult eig = sym_eig(c);
        CHECK(eig.eigenvalues.back() >= -1e-10 * max_abs(c));
    }
}

// ---------------------------------------------------------------------------
// rank selection
// ---------------------------------------------------------------------------

TEST_CASE("energy rule on pinned spectra") {
    CHECK(energy_rank({4.0, 1.0, 0.0, 0.0}, 66.0) == 1);  // 2/3 >= 0.66
    CHECK(energy_rank({9.0, 4.0, 1.0}, 84.0) == 3);       // 5/6 < 0.84
    CHECK(energy_rank({4.0, 1.0, 0.0, 0.0}, 100.0) == 2); // strictly positive count
    CHECK_THROWS_AS(energy_rank({1.0}, 0.0), ConfigError);
    CHECK_THROWS_AS(energy_rank({1.0}, 101.0), ConfigError);
    CHECK_THROWS_AS(energy_rank({0.0, 0.0}, 50.0), DomainError);
}

TEST_CASE("energy rule picks the minimal rank on random spectra") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + rng.index(12);
        Vector lams(d);
        for (double& l : lams) l = rng.uniform(0.0, 10.0);
        std::sort(lams.begin(), lams.end(), std::greater<>());
        const double keep = rng.uniform(1.0, 100.0);
        const std::size_t r = energy_rank(lams, keep);

        // Brute-force scan over the same cumulative sums.
        Vector roots(d);
        double total = 0.0;
        for (std::size_t j = 0; j < d; ++j) total += roots[j] = std::sqrt(lams[j]);
        double partial = 0.0;
        std::size_t expected = 0;
        for (std::size_t j = 0; j < d; ++j) {
            partial += roots[j];
            if (partial / total >= keep / 100.0) {
                expected = j + 1;
                break;
            }
        }
        if (expected == 0) expected = d;
        CHECK(r == expected);
    }
}

TEST_CASE("reconstruction_basis on diag(9,4,1) at keep 84") {
    ImpactConfig cfg;
    cfg.keep_ratio = 84.0;
    const BasisSelection basis = reconstruction_basis(
        Matrix::from_rows({{9.0, 0.0, 0.0}, {0.0, 4.0, 0.0}, {0.0, 0.0, 1.0}}), cfg);
    CHECK(basis.rank == 3);
    CHECK(basis.eigenvalues == Vector{9.0, 4.0, 1.0});
    CHECK(basis.energy_fraction == doctest::Approx(1.0));
    CHECK(basis.u == Matrix::identity(3));
}

TEST_CASE("reconstruction_basis validates rank and degeneracy") {
    ImpactConfig cfg;
    cfg.explicit_rank = 5;
    CHECK_THROWS_AS(reconstruction_basis(Matrix::identity(3), cfg), RankError);
    cfg.explicit_rank.reset();
    CHECK_THROWS_AS(reconstruction_basis(Matrix(3, 3), cfg), DomainError);
}

TEST_CASE("tiny negative eigenvalues are clamped before the energy rule") {
    Matrix c = Matrix::from_rows({{1.0, 0.0}, {0.0, -1e-14}});
    ImpactConfig cfg;
    const BasisSelection basis = reconstruction_basis(c, cfg);
    CHECK(basis.eigenvalues[1] == 0.0);
    CHECK(basis.rank == 1);
}

// ---------------------------------------------------------------------------
// factorize_impact
// ---------------------------------------------------------------------------

TEST_CASE("full-rank identity-covariance factorization is exact") {
    const std::size_t d = 3, n = 3;
    Rng rng(43);
    const Matrix w = oracle::random_matrix(rng, d, n);
    const Vector b = oracle::random_vector(rng, d);
    const ProfiledLayer prof =
        synthetic_prof(Vector(d, 0.0), Matrix::identity(d), Vector(d, 1.0));

    ImpactConfig cfg;
    cfg.eta = 1.0;
    cfg.keep_ratio = 100.0;
    cfg.replace_only_if_smaller = false;
    const auto factored = factorize_impact(w, b, prof, cfg);
    REQUIRE(factored.has_value());
    CHECK(factored->rank == d);
    CHECK(factored->w1 == w);
    CHECK(factored->w2 == Matrix::identity(d));
    CHECK(factored->b_prime == b);

    const Vector x = oracle::random_vector(rng, n);
    const Vector dense_out = add(matvec(w, x), b);
    CHECK(max_abs(sub(factored->forward(x), dense_out)) <= 1e-10);
}

TEST_CASE("eta = 1 impact equals afm bit for bit") {
    Rng rng(47);
    const std::size_t d = 5, n = 4;
    const Matrix w = oracle::random_matrix(rng, d, n);
    const Vector b = oracle::random_vector(rng, d);
    const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 60),
                                      oracle::random_vector(rng, 5, 0.0, 3.0));

    ImpactConfig cfg;
    cfg.eta = 1.0;
    cfg.explicit_rank = 2;
    cfg.replace_only_if_smaller = false;
    const auto via_impact = factorize_impact(w, b, inst.prof, cfg);
    cfg.eta = 0.123;  // afm must override whatever eta is configured
    const auto via_afm = afm_factorize(w, b, inst.prof, cfg);
    REQUIRE(via_impact.has_value());
    REQUIRE(via_afm.has_value());
    CHECK(via_impact->w1 == via_afm->w1);
    CHECK(via_impact->w2 == via_afm->w2);
    CHECK(via_impact->b_prime == via_afm->b_prime);
    CHECK(via_afm->provenance.method == "afm");
    CHECK(via_afm->provenance.eta == 1.0);
}

TEST_CASE("factored forward matches the projection condition") {
    Rng rng(53);
    const std::size_t d = 4, n = 3;
    const Matrix w = oracle::random_matrix(rng, d, n);
    const Vector b = oracle::random_vector(rng, d);

    // Profile activations produced by the layer itself.
    std::vector<Vector> samples;
    LayerStatsAccumulator acc(d);
    for (int s = 0; s < 500; ++s) {
        const Vector x = oracle::random_vector(rng, n, -2.0, 2.0);
        const Vector y = add(matvec(w, x), b);
        samples.push_back(y);
        acc.accumulate(y, oracle::random_vector(rng, d, -1.0, 1.0), norm_sq(x));
    }
    const ProfiledLayer prof = acc.finalize();

    ImpactConfig cfg;
    cfg.eta = 0.3;
    cfg.explicit_rank = 2;
    cfg.replace_only_if_smaller = false;
    const auto factored = factorize_impact(w, b, prof, cfg);
    REQUIRE(factored.has_value());

    // Oracle: y_hat = E[y] + (U / a)(U o a)^T (W x + b - E[y]) evaluated from
    // the basis directly.
    const Vector a = transform_coeff(prof.grad_sq_mean, cfg.eta);
    const BasisSelection basis = reconstruction_basis(weighted_cov(prof, a), cfg);
    const Matrix u_div = div_rows(basis.u, a);
    const Matrix u_mul = scale_rows(basis.u, a);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = oracle::random_vector(rng, n, -2.0, 2.0);
        const Vector y = add(matvec(w, x), b);
        const Vector expected =
            add(prof.mean, matvec(u_div, matvec(transpose(u_mul), sub(y, prof.mean))));
        CHECK(max_abs(sub(factored->forward(x), expected)) <= 1e-8);
    }
}

TEST_CASE("factorize_impact reports no benefit when the rank is too high") {
    const std::size_t d = 4, n = 4;
    Rng rng(59);
    const Matrix w = oracle::random_matrix(rng, d, n);
    const ProfiledLayer prof =
        synthetic_prof(Vector(d, 0.0), Matrix::identity(d), Vector(d, 1.0));
    ImpactConfig cfg;
    cfg.explicit_rank = 3;  // 3*(4+4) = 24 >= 16 = d*n
    CHECK_FALSE(factorize_impact(w, Vector(d, 0.0), prof, cfg).has_value());
    cfg.explicit_rank = 1;  // 1*8 < 16
    CHECK(factorize_impact(w, Vector(d, 0.0), prof, cfg).has_value());
}

// ---------------------------------------------------------------------------
// objective_h / objective_f
// ---------------------------------------------------------------------------

TEST_CASE("objective_h vanishes when the basis spans everything") {
    Rng rng(61);
    const auto inst = profile_samples(oracle::random_activation_samples(rng, 4, 60),
                                      Vector(4, 1.0));
    const Vector a(4, 1.0);
    const double h = objective_h(inst.samples, inst.prof, a, Matrix::identity(4));
    CHECK(h >= 0.0);
    CHECK(h <= 1e-10);
}

TEST_CASE("objective_h with an empty basis is the total transformed energy") {
    Rng rng(67);
    const auto inst = profile_samples(oracle::random_activation_samples(rng, 3, 100),
                                      oracle::random_vector(rng, 3, 0.5, 2.0));
    const Vector a = transform_coeff(inst.prof.grad_sq_mean, 0.4);
    const double h = objective_h(inst.samples, inst.prof, a, Matrix(3, 0));
    const Matrix c = weighted_cov(inst.prof, a);
    CHECK(h == doctest::Approx(trace(c)).epsilon(1e-9));
}

TEST_CASE("objective_h equals its closed form on the profiling set") {
    Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t d = 5;
        const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 150),
                                          oracle::random_vector(rng, d, 0.0, 3.0));
        const Vector a = transform_coeff(inst.prof.grad_sq_mean, 0.25);
        const Matrix c = weighted_cov(inst.prof, a);
        ImpactConfig cfg;
        cfg.explicit_rank = 2;
        const BasisSelection basis = reconstruction_basis(c, cfg);
        const double direct = objective_h(inst.samples, inst.prof, a, basis.u);
        CHECK(direct == doctest::Approx(objective_h_closed_form(c, basis)).epsilon(1e-8));
    }
}

TEST_CASE("objective_h rejects non-orthonormal bases") {
    Rng rng(73);
    const auto inst = profile_samples(oracle::random_activation_samples(rng, 3, 20),
                                      Vector(3, 1.0));
    Matrix skew(3, 2);
    skew(0, 0) = 1.0;
    skew(0, 1) = 1.0;  // columns not orthogonal
    skew(1, 1) = 1.0;
    CHECK_THROWS_AS(objective_h(inst.samples, inst.prof, Vector(3, 1.0), skew), DomainError);
}

TEST_CASE("objective_f basics") {
    std::vector<std::pair<Vector, Vector>> pairs = {{{1.0, 2.0}, {1.0, 2.0}},
                                                    {{0.5, -1.0}, {0.5, -1.0}}};
    const auto loss = [](const Vector& y) { return y[0] + y[1]; };
    CHECK(objective_f(pairs, loss, 0.7, 0.3) == 0.0);

    pairs = {{{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 2.0}, {0.0, 0.0}}};
    // beta = 0 isolates the reconstruction term: mean(1, 4) = 2.5
    CHECK(objective_f(pairs, loss, 1.0, 0.0) == doctest::Approx(2.5));
    CHECK(objective_f(pairs, loss, 0.5, 0.0) == doctest::Approx(1.25));
}

TEST_CASE("deterministic linear loss keeps f below h") {
    Rng rng(79);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t d = 2 + rng.index(7);
        const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 60),
                                          Vector(d, 0.0));
        Vector g(d);
        for (double& e : g) e = rng.uniform(-2.0, 2.0);
        if (norm_sq(g) < 1e-6) continue;
        Vector grad_sq(d);
        for (std::size_t i = 0; i < d; ++i) grad_sq[i] = g[i] * g[i];

        const double eta = rng.uniform(0.0, 1.0);
        const Vector a = transform_coeff(grad_sq, eta);
        ProfiledLayer prof = inst.prof;
        prof.grad_sq_mean = grad_sq;
        const Matrix c = weighted_cov(prof, a);
        ImpactConfig cfg;
        cfg.explicit_rank = 1 + rng.index(d);
        const BasisSelection basis = reconstruction_basis(c, cfg);

        // y_hat from the projection condition for this basis
        const Matrix u_div = div_rows(basis.u, a);
        const Matrix u_mul = scale_rows(basis.u, a);
        std::vector<std::pair<Vector, Vector>> pairs;
        for (const Vector& y : inst.samples) {
            const Vector y_hat =
                add(prof.mean, matvec(u_div, matvec(transpose(u_mul), sub(y, prof.mean))));
            pairs.emplace_back(y, y_hat);
        }
        const auto loss = [&g](const Vector& y) { return dot(g, y); };
        const double f = objective_f(pairs, loss, eta, (1.0 - eta) / norm_sq(g));
        const double h = objective_h(inst.samples, prof, a, basis.u);
        CHECK(f <= h + 1e-10 * (1.0 + std::abs(h)));
    }
}

// ---------------------------------------------------------------------------
// svd_factorize / fwsvd_factorize / afm_factorize
// ---------------------------------------------------------------------------

TEST_CASE("full-rank svd factorization reproduces the dense layer") {
    Rng rng(83);
    const Matrix w = oracle::random_matrix(rng, 4, 5);
    const Vector b = oracle::random_vector(rng, 4);
    const FactoredLayer f = svd_factorize(w, b, 4);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector x = oracle::random_vector(rng, 5);
        CHECK(max_abs(sub(f.forward(x), add(matvec(w, x), b))) <= 1e-8);
    }
}

TEST_CASE("svd of diag(3,1) at rank 1") {
    const FactoredLayer f = svd_factorize(Matrix::from_rows({{3.0, 0.0}, {0.0, 1.0}}),
                                          Vector{0.0, 0.0}, 1);
    const Matrix product = matmul(f.w2, f.w1);
    CHECK(max_abs(sub(product, Matrix::from_rows({{3.0, 0.0}, {0.0, 0.0}}))) <= 1e-10);
    CHECK_THROWS_AS(svd_factorize(Matrix(2, 2), Vector(2, 0.0), 3), RankError);
}

TEST_CASE("svd beats random rank-2 factorizations") {
    Rng rng(89);
    const Matrix w = oracle::random_matrix(rng, 6, 4, -1.5, 1.5);
    const FactoredLayer f = svd_factorize(w, Vector(6, 0.0), 2);
    const double svd_residual = frobenius_norm(sub(w, matmul(f.w2, f.w1)));
    for (int trial = 0; trial < 1000; ++trial) {
        // Random frame with optimal coefficients: at least as hard to beat as
        // fully random factor pairs.
        const Matrix frame = oracle::random_orthonormal_frame(rng, 6, 2);
        const Matrix approx = matmul(frame, matmul(transpose(frame), w));
        CHECK(svd_residual <= frobenius_norm(sub(w, approx)) + 1e-10);
    }
}

TEST_CASE("uniform fisher weights collapse fwsvd to plain svd") {
    Rng rng(97);
    const Matrix w = oracle::random_matrix(rng, 5, 4);
    const Vector b = oracle::random_vector(rng, 5);
    ProfiledLayer prof = synthetic_prof(Vector(5, 0.0), Matrix::identity(5), Vector(5, 1.0));
    prof.fisher_row = Vector(5, 2.5);

    const FactoredLayer fw = fwsvd_factorize(w, b, prof, 2);
    const FactoredLayer plain = svd_factorize(w, b, 2);
    CHECK(max_abs(sub(matmul(fw.w2, fw.w1), matmul(plain.w2, plain.w1))) <= 1e-8);
    for (int trial = 0; trial < 5; ++trial) {
        const Vector x = oracle::random_vector(rng, 4);
        CHECK(max_abs(sub(fw.forward(x), plain.forward(x))) <= 1e-8);
    }
}

TEST_CASE("full-rank fwsvd reconstructs exactly") {
    Rng rng(101);
    const Matrix w = oracle::random_matrix(rng, 4, 3);
    ProfiledLayer prof = synthetic_prof(Vector(4, 0.0), Matrix::identity(4), Vector(4, 1.0));
    prof.fisher_row = Vector{4.0, 1.0, 0.5, 2.0};
    const FactoredLayer f = fwsvd_factorize(w, Vector(4, 0.0), prof, 3);
    CHECK(max_abs(sub(matmul(f.w2, f.w1), w)) <= 1e-8);
}

TEST_CASE("fwsvd shrinks the weighted residual relative to plain svd") {
    Rng rng(103);
    const Matrix w = oracle::random_matrix(rng, 4, 3);
    ProfiledLayer prof = synthetic_prof(Vector(4, 0.0), Matrix::identity(4), Vector(4, 1.0));
    prof.fisher_row = Vector{4.0, 1.0, 1.0, 1.0};
    const FactoredLayer fw = fwsvd_factorize(w, Vector(4, 0.0), prof, 1);
    const FactoredLayer plain = svd_factorize(w, Vector(4, 0.0), 1);

    Vector weights(4);
    for (std::size_t i = 0; i < 4; ++i) weights[i] = std::sqrt((*prof.fisher_row)[i] + 1e-12);
    const auto weighted_residual = [&](const FactoredLayer& f) {
        return frobenius_norm(scale_rows(sub(w, matmul(f.w2, f.w1)), weights));
    };
    CHECK(weighted_residual(fw) <= weighted_residual(plain) + 1e-12);
    CHECK_THROWS_AS(
        fwsvd_factorize(w, Vector(4, 0.0),
                        synthetic_prof(Vector(4, 0.0), Matrix::identity(4), Vector(4, 1.0)), 1),
        ConfigError);
}

TEST_CASE("isotropic covariance: h depends only on the rank") {
    ProfiledLayer prof = synthetic_prof(Vector(5, 0.0), Matrix::identity(5), Vector(5, 1.0));
    const Matrix c = weighted_cov(prof, Vector(5, 1.0));
    Rng rng(107);
    for (std::size_t r : {1u, 2u, 3u}) {
        const Matrix frame = oracle::random_orthonormal_frame(rng, 5, r);
        double h = trace(c);
        for (std::size_t k = 0; k < r; ++k) {
            const Vector u_k = frame.col(k);
            h -= dot(u_k, matvec(c, u_k));
        }
        CHECK(h == doctest::Approx(5.0 - static_cast<double>(r)).epsilon(1e-10));
    }
}

TEST_CASE("rank-1 activations reconstruct perfectly at rank 1") {
    Rng rng(109);
    const std::size_t d = 4, n = 3;
    // W = v w^T makes every activation collinear around the bias.
    const Vector v = oracle::random_vector(rng, d, -1.0, 1.0);
    const Vector wv = oracle::random_vector(rng, n, -1.0, 1.0);
    const Matrix w = outer(v, wv);
    const Vector b = oracle::random_vector(rng, d);

    LayerStatsAccumulator acc(d);
    std::vector<Vector> xs;
    for (int s = 0; s < 100; ++s) {
        const Vector x = oracle::random_vector(rng, n, -2.0, 2.0);
        xs.push_back(x);
        acc.accumulate(add(matvec(w, x), b), Vector(d, 0.1), norm_sq(x));
    }
    ImpactConfig cfg;
    cfg.explicit_rank = 1;
    cfg.replace_only_if_smaller = false;
    const auto f = afm_factorize(w, b, acc.finalize(), cfg);
    REQUIRE(f.has_value());
    for (const Vector& x : xs) {
        const Vector y = add(matvec(w, x), b);
        CHECK(max_abs(sub(f->forward(x), y)) <= 1e-8);
    }
}

TEST_CASE("anisotropic covariance picks the dominant axis") {
    ProfiledLayer prof = synthetic_prof({0.0, 0.0}, Matrix::from_rows({{9.0, 0.0}, {0.0, 1.0}}),
                                        {1.0, 1.0});
    ImpactConfig cfg;
    cfg.explicit_rank = 1;
    cfg.replace_only_if_smaller = false;
    const auto f = afm_factorize(Matrix::identity(2), Vector(2, 0.0), prof, cfg);
    REQUIRE(f.has_value());
    // Oracle: top eigenvector of diag(9,1) is e1; sign convention makes it +e1.
    CHECK(f->w2(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f->w2(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Optimality and consistency invariants
// ---------------------------------------------------------------------------

TEST_CASE("sample mean of transformed outer products equals the weighted covariance") {
    Rng rng(113);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t d = 3 + rng.index(4);
        const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 200),
                                          oracle::random_vector(rng, d, 0.0, 2.0));
        const Vector a = transform_coeff(inst.prof.grad_sq_mean, rng.uniform(0.0, 1.0));
        const Matrix c = weighted_cov(inst.prof, a);

        Matrix direct(d, d);
        for (const Vector& y : inst.samples) {
            const Vector ty = hadamard(a, sub(y, inst.prof.mean));
            direct = add(direct, outer(ty, ty));
        }
        direct = scale(direct, 1.0 / static_cast<double>(inst.samples.size()));
        CHECK(max_abs(sub(direct, c)) <= 1e-9);
    }
}

TEST_CASE("the eigenbasis beats random orthonormal frames") {
    Rng rng(127);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t d = 4 + rng.index(5);  // 4..8
        const std::size_t r = 1 + rng.index(3);
        const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 80),
                                          oracle::random_vector(rng, d, 0.0, 2.0));
        const Vector a = transform_coeff(inst.prof.grad_sq_mean, 0.5);
        ImpactConfig cfg;
        cfg.explicit_rank = r;
        const BasisSelection basis = reconstruction_basis(weighted_cov(inst.prof, a), cfg);
        const double h_eig = objective_h(inst.samples, inst.prof, a, basis.u);
        for (int frame_trial = 0; frame_trial < 200; ++frame_trial) {
            const Matrix frame = oracle::random_orthonormal_frame(rng, d, r);
            CHECK(h_eig <= objective_h(inst.samples, inst.prof, a, frame) + 1e-10);
        }
    }
}

TEST_CASE("objective_h is non-increasing in the rank for nested eigenbases") {
    Rng rng(131);
    const std::size_t d = 6;
    const auto inst = profile_samples(oracle::random_activation_samples(rng, d, 100),
                                      oracle::random_vector(rng, d, 0.0, 2.0));
    const Vector a = transform_coeff(inst.prof.grad_sq_mean, 0.5);
    const Matrix c = weighted_cov(inst.prof, a);
    double previous = objective_h(inst.samples, inst.prof, a, Matrix(d, 0));
    for (std::size_t r = 1; r <= d; ++r) {
        ImpactConfig cfg;
        cfg.explicit_rank = r;
        const BasisSelection basis = reconstruction_basis(c, cfg);
        const double h = objective_h(inst.samples, inst.prof, a, basis.u);
        CHECK(h <= previous + 1e-12);
        previous = h;
    }
}

TEST_CASE("scaling activations rescales eigenvalues but keeps the basis") {
    Rng rng(137);
    const std::size_t d = 5;
    const auto samples = oracle::random_activation_samples(rng, d, 120);
    const Vector grad_sq = oracle::random_vector(rng, d, 0.1, 2.0);
    const double s = 3.0;
    std::vector<Vector> scaled;
    for (const auto& y : samples) scaled.push_back(scale(y, s));

    const auto base = profile_samples(samples, grad_sq);
    const auto big = profile_samples(scaled, grad_sq);
    const Vector a = transform_coeff(grad_sq, 0.5);
    ImpactConfig cfg;
    cfg.explicit_rank = 2;
    const BasisSelection basis_a = reconstruction_basis(weighted_cov(base.prof, a), cfg);
    const BasisSelection basis_b = reconstruction_basis(weighted_cov(big.prof, a), cfg);
    for (std::size_t j = 0; j < d; ++j)
        CHECK(basis_b.eigenvalues[j] ==
              doctest::Approx(s * s * basis_a.eigenvalues[j]).epsilon(1e-9));
    CHECK(max_abs(sub(basis_a.u, basis_b.u)) <= 1e-7);  // sign convention aligns them
    CHECK(basis_a.rank == basis_b.rank);
}
