#include <doctest.h>

#include <cmath>

#include "tttlab/theory.hpp"

using namespace tttlab;

namespace {

WorldSpec identity_spec(int d, double s1, double s, double w, double r11, uint64_t cseed = 1) {
    WorldSpec spec;
    spec.d = d;
    spec.sigma1 = s1;
    spec.sigma = s;
    spec.w = w;
    spec.r11 = r11;
    spec.corruption_seed = cseed;
    return spec;
}

// M(alpha) without the [0,1] range guard, for two-sided finite differences.
MatD interp_unguarded(const LinearWorld& world, const std::vector<double>& xt, double alpha) {
    MatD m(world.d, world.d);
    for (int i = 0; i < world.d; ++i)
        for (int j = 0; j < world.d; ++j)
            m(i, j) = (1.0 - alpha) * world.Sigma(i, j) + alpha * xt[i] * xt[j];
    return m;
}

}  // namespace

TEST_CASE("make_world: r11 = 1 leaves the principal axis fixed") {
    const LinearWorld w = make_world(identity_spec(4, 3.0, 1.0, 1.0, 1.0));
    const auto ru = w.r1();
    const auto u = w.u1();
    for (int i = 0; i < 4; ++i) CHECK(ru[i] == doctest::Approx(u[i]).epsilon(1e-12));
    CHECK(w.r11() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("make_world: d=2, r11=0 swaps the principal axis into its complement") {
    const LinearWorld w = make_world(identity_spec(2, 3.0, 1.0, 1.0, 0.0));
    CHECK(std::abs(w.r11()) < 1e-12);
    const auto r1 = w.r1();
    CHECK(std::abs(r1[0]) < 1e-12);
    CHECK(std::abs(std::abs(r1[1]) - 1.0) < 1e-12);
}

TEST_CASE("make_world invariants hold for any seed") {
    for (uint64_t seed : {1ull, 7ull, 42ull}) {
        WorldSpec spec;
        spec.d = 6;
        spec.basis_seed = seed;
        spec.corruption_seed = seed + 100;
        const LinearWorld w = make_world(spec);
        CHECK(orthogonality_defect(w.U) < 1e-10);
        CHECK(orthogonality_defect(w.R) < 1e-10);
        CHECK(max_abs_asymmetry(w.Sigma) < 1e-12);
    }
}

TEST_CASE("make_world rejects bad spectra and alignments") {
    WorldSpec spec;
    spec.sigma1 = 1.0;
    spec.sigma = 1.0;
    CHECK_THROWS_AS(make_world(spec), ConfigError);
    spec.sigma1 = 4.0;
    spec.sigma = -1.0;
    CHECK_THROWS_AS(make_world(spec), ConfigError);
    spec = WorldSpec{};
    spec.r11 = 1.5;
    CHECK_THROWS_AS(make_world(spec), ConfigError);
}

TEST_CASE("sym_eig sorts a diagonal matrix with a signed permutation") {
    MatD m(3, 3);
    m(0, 0) = 1.0;
    m(1, 1) = 5.0;
    m(2, 2) = 3.0;
    const SpectralPair e = sym_eig(m);
    CHECK(e.S == std::vector<double>{5.0, 3.0, 1.0});
    CHECK(e.V(1, 0) == 1.0);
    CHECK(e.V(2, 1) == 1.0);
    CHECK(e.V(0, 2) == 1.0);
}

TEST_CASE("sym_eig recovers a constructed spectrum (decompose-the-construction oracle)") {
    WorldSpec spec;
    spec.d = 3;
    spec.basis_seed = 9;
    const MatD q = make_world(spec).U;
    MatD m(3, 3);
    const double eigs[3] = {3.0, 2.0, 1.0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) m(i, j) += q(i, k) * eigs[k] * q(j, k);
    const SpectralPair e = sym_eig(m);
    for (int k = 0; k < 3; ++k) CHECK(e.S[k] == doctest::Approx(eigs[k]).epsilon(1e-10));
    CHECK(orthogonality_defect(e.V) < 1e-10);
}

TEST_CASE("sym_eig reconstruction V S V^T matches the input") {
    Xoshiro256ss rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const int d = 2 + static_cast<int>(rng.bounded(7));
        MatD m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.normal();
        const SpectralPair e = sym_eig(m);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double rec = 0.0;
                for (int k = 0; k < d; ++k) rec += e.V(i, k) * e.S[k] * e.V(j, k);
                num += (rec - m(i, j)) * (rec - m(i, j));
                den += m(i, j) * m(i, j);
            }
        CHECK(std::sqrt(num / den) < 1e-9);
    }
}

TEST_CASE("sym_eig rejects non-symmetric input") {
    MatD m(2, 2);
    m(0, 1) = 1.0;
    CHECK_THROWS_AS(sym_eig(m), NumericError);
}

TEST_CASE("interpolated covariance endpoints and midpoint arithmetic") {
    const LinearWorld w = make_world(identity_spec(2, 4.0, 1.0, 1.0, 0.6));
    const std::vector<double> xt{1.0, 1.0};

    const MatD m0 = interpolated_covariance(w, xt, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(m0(i, j) == w.Sigma(i, j));

    const MatD m1 = interpolated_covariance(w, xt, 1.0);
    CHECK(m1(0, 0) == 1.0);
    CHECK(m1(0, 1) == 1.0);
    CHECK(m1(1, 1) == 1.0);

    const MatD mh = interpolated_covariance(w, xt, 0.5);
    CHECK(mh(0, 0) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(mh(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mh(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mh(1, 1) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(interpolated_covariance(w, xt, -0.1), ConfigError);
    CHECK_THROWS_AS(interpolated_covariance(w, xt, 1.1), ConfigError);
}

TEST_CASE("ttt_pca_predict at alpha 0 with R = I reproduces the label exactly") {
    const LinearWorld w = make_world(identity_spec(3, 4.0, 1.0, 0.7, 1.0));
    Xoshiro256ss rng(5);
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> x = sample_x(w, rng);
        const double y = w.w * dot(w.u1(), x);
        CHECK(ttt_pca_predict(w, x, 0.0) == y);
    }
}

TEST_CASE("ttt_pca_predict with w = 0 is identically zero") {
    const LinearWorld w = make_world(identity_spec(4, 4.0, 1.0, 0.0, 0.5));
    Xoshiro256ss rng(6);
    const std::vector<double> x = sample_x(w, rng);
    CHECK(ttt_pca_predict(w, matvec(w.R, x), 0.3) == 0.0);
}

TEST_CASE("two-path equality: alpha 0 prediction equals the explicit baseline formula") {
    for (uint64_t seed : {3ull, 4ull, 5ull}) {
        WorldSpec spec;
        spec.d = 5;
        spec.basis_seed = seed;
        spec.r11 = 0.7;
        spec.corruption_seed = seed;
        const LinearWorld w = make_world(spec);
        Xoshiro256ss rng(seed);
        for (int i = 0; i < 10; ++i) {
            const std::vector<double> xt = matvec(w.R, sample_x(w, rng));
            const double via_eig = ttt_pca_predict(w, xt, 0.0);
            const double baseline = w.w * dot(w.u1(), xt);
            CHECK(via_eig == doctest::Approx(baseline).epsilon(1e-10));
        }
    }
}

TEST_CASE("risk at (R = I, alpha = 0) is exactly zero") {
    const LinearWorld w = make_world(identity_spec(4, 4.0, 1.0, 1.0, 1.0));
    const RiskEstimate r = risk(w, 0.0, 200, 7);
    CHECK(r.estimate == 0.0);
    CHECK(r.std_error == 0.0);
}

TEST_CASE("risk is invariant to simultaneous rotation of (U, R)") {
    WorldSpec spec;
    spec.d = 4;
    spec.basis_seed = 11;
    spec.r11 = 0.6;
    spec.corruption_seed = 12;
    const LinearWorld w1 = make_world(spec);

    WorldSpec qspec;
    qspec.d = 4;
    qspec.basis_seed = 77;
    const MatD q = make_world(qspec).U;

    LinearWorld w2 = w1;
    w2.U = matmul(q, w1.U);
    w2.R = matmul(q, matmul(w1.R, transpose(q)));
    w2.Sigma = matmul(q, matmul(w1.Sigma, transpose(q)));
    w2.identity_basis = false;

    const RiskEstimate r1 = risk(w1, 0.25, 4000, 99);
    const RiskEstimate r2 = risk(w2, 0.25, 4000, 99);
    CHECK(std::abs(r1.estimate - r2.estimate) < 1e-8);  // paired seeds
}

TEST_CASE("risk estimate brackets a 10x larger re-estimate within 3 SE") {
    WorldSpec spec;
    spec.d = 6;
    spec.basis_seed = 21;
    spec.r11 = 0.5;
    spec.corruption_seed = 22;
    const LinearWorld w = make_world(spec);
    const RiskEstimate small = risk(w, 0.2, 2000, 31);
    const RiskEstimate big = risk(w, 0.2, 20000, 32);
    const double gap = std::abs(small.estimate - big.estimate);
    CHECK(gap <= 3.0 * std::sqrt(small.std_error * small.std_error +
                                 big.std_error * big.std_error));
}

TEST_CASE("eigvec derivative closed form at alpha 0, U = I, d = 2") {
    const LinearWorld w = make_world(identity_spec(2, 2.0, 1.0, 1.0, 0.8));
    const double a = 0.9, b = -0.4;
    const EigDerivative ed = eigvec_derivative(w, {a, b}, 0.0);
    CHECK(ed.vdot1[0] == doctest::Approx(0.0).epsilon(1e-12));    // 0 if i = 1
    CHECK(ed.vdot1[1] == doctest::Approx(a * b).epsilon(1e-10));  // gap = 1
}

TEST_CASE("eigvec/eigenvalue derivatives match finite differences of sym_eig") {
    Xoshiro256ss seeds(404);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        WorldSpec spec;
        spec.d = 2 + static_cast<int>(seeds.bounded(7));
        spec.sigma1 = 3.0 + seeds.uniform();
        spec.sigma = 1.0;
        spec.basis_seed = seeds.next_u64();
        spec.r11 = 0.3 + 0.6 * seeds.uniform();
        spec.corruption_seed = seeds.next_u64();
        const LinearWorld w = make_world(spec);
        Xoshiro256ss rng(trial);
        const std::vector<double> xt = matvec(w.R, sample_x(w, rng));

        for (double alpha : {0.0, 0.1, 0.3}) {
            const EigDerivative ed = eigvec_derivative(w, xt, alpha);
            const double h = 1e-6;
            const SpectralPair mid = sym_eig(interp_unguarded(w, xt, alpha));
            const SpectralPair up = sym_eig(interp_unguarded(w, xt, alpha + h));
            const SpectralPair dn = sym_eig(interp_unguarded(w, xt, alpha - h));

            auto aligned_col0 = [&](const SpectralPair& e) {
                std::vector<double> v = e.V.col(0);
                if (dot(v, mid.V.col(0)) < 0)
                    for (double& x : v) x = -x;
                return v;
            };
            const std::vector<double> vu = aligned_col0(up), vd = aligned_col0(dn);
            double num = 0.0, den = 0.0;
            for (int i = 0; i < w.d; ++i) {
                const double fd = (vu[i] - vd[i]) / (2.0 * h);
                num += (ed.vdot1[i] - fd) * (ed.vdot1[i] - fd);
                den += fd * fd;
            }
            CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-12) < 1e-5);

            const double fd_s1 = (up.S[0] - dn.S[0]) / (2.0 * h);
            CHECK(std::abs(ed.sdot[0] - fd_s1) / std::max(std::abs(fd_s1), 1e-12) < 1e-6);
            ++checked;
        }
    }
    CHECK(checked == 30);
}

TEST_CASE("eigvec derivative raises on a degenerate spectrum") {
    // sigma1 barely above sigma: the divided gap collapses below 1e-8
    const LinearWorld w = make_world(identity_spec(3, 1.0 + 1e-12, 1.0, 1.0, 1.0));
    CHECK_THROWS_AS(eigvec_derivative(w, {0.0, 0.1, 0.1}, 0.0), NumericError);
}

TEST_CASE("alignment derivative closed form endpoints") {
    const LinearWorld w1 = make_world(identity_spec(4, 4.0, 1.0, 1.0, 1.0));
    CHECK(alignment_derivative(w1, 10, 3).closed_form == doctest::Approx(0.0).epsilon(1e-12));
    const LinearWorld w2 = make_world(identity_spec(4, 4.0, 1.0, 1.0, 0.5));
    CHECK(alignment_derivative(w2, 10, 3).closed_form == doctest::Approx(0.375).epsilon(1e-10));
}

TEST_CASE("alignment derivative requires the proof's identity-basis reduction") {
    WorldSpec spec;
    spec.d = 4;
    spec.basis_seed = 5;
    spec.r11 = 0.5;
    const LinearWorld w = make_world(spec);
    CHECK_THROWS_AS(alignment_derivative(w, 100, 1), ConfigError);
}

TEST_CASE("alignment derivative Monte Carlo lands within 3 SE of the closed form") {
    for (int d : {2, 8}) {
        for (double r11 : {0.3, 0.6, 0.9}) {
            const LinearWorld w = make_world(identity_spec(d, 4.0, 1.0, 1.0, r11, d * 10 + 1));
            const AlignmentResult a = alignment_derivative(w, 20000, 1234);
            CAPTURE(d);
            CAPTURE(r11);
            CHECK(std::abs(a.monte_carlo - a.closed_form) <= 3.0 * a.std_error);
        }
    }
}

TEST_CASE("theorem_check flags the violated assumption when R = I") {
    const LinearWorld w = make_world(identity_spec(4, 4.0, 1.0, 1.0, 1.0));
    const TheoremReport rep = theorem_check(w, {0.05, 0.1, 0.2}, 2000, 9);
    CHECK(rep.risk0 == 0.0);  // baseline is the oracle
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.assumption_ok);
    CHECK(rep.note.find("assumption violated") != std::string::npos);
}

TEST_CASE("theorem_check passes on the reference world (d=8, r11=cos(pi/4))") {
    WorldSpec spec;
    spec.d = 8;
    spec.sigma1 = 4.0;
    spec.sigma = 1.0;
    spec.w = 1.0;
    spec.r11 = std::cos(M_PI / 4.0);
    spec.corruption_seed = 17;
    const LinearWorld w = make_world(spec);
    const TheoremReport rep = theorem_check(w, default_alpha_grid(), 5000, 2024);
    CHECK(rep.assumption_ok);
    CHECK(rep.pass);
    CHECK(rep.risk_min < rep.risk0);
}

TEST_CASE("theorem_check is deterministic under a fixed seed") {
    WorldSpec spec;
    spec.d = 5;
    spec.basis_seed = 3;
    spec.r11 = 0.6;
    const LinearWorld w = make_world(spec);
    const TheoremReport a = theorem_check(w, {0.1, 0.2, 0.3}, 1500, 55);
    const TheoremReport b = theorem_check(w, {0.1, 0.2, 0.3}, 1500, 55);
    CHECK(a.risks == b.risks);
    CHECK(a.ses == b.ses);
    CHECK(a.risk0 == b.risk0);
    CHECK(a.pass == b.pass);
}
