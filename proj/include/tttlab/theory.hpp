#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tttlab/common.hpp"
#include "tttlab/rng.hpp"

namespace tttlab {

// Small dense double-precision matrix for the linear analysis (64-bit path).
struct MatD {
    int rows = 0, cols = 0;
    AlignedVec<double> a;

    MatD() = default;
    MatD(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return a[size_t(i) * cols + j]; }

    static MatD identity(int n) {
        MatD m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::vector<double> col(int j) const {
        std::vector<double> v(rows);
        for (int i = 0; i < rows; ++i) v[i] = (*this)(i, j);
        return v;
    }
};

MatD matmul(const MatD& a, const MatD& b);
MatD transpose(const MatD& m);
double dot(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> matvec(const MatD& m, const std::vector<double>& v);
double max_abs_asymmetry(const MatD& m);
double orthogonality_defect(const MatD& m);  // max |Q^T Q - I| entry

// The covariance-model world of the linear analysis: eigenbasis U with
// spectrum (sigma1, sigma, ..., sigma), label weight w, orthogonal
// corruption R acting as x~ = R x.
struct LinearWorld {
    int d = 0;
    double sigma1 = 0.0, sigma = 0.0, w = 0.0;
    MatD U;      // orthogonal basis, columns sign-fixed
    MatD R;      // orthogonal corruption
    MatD Sigma;  // U diag(sigma1, sigma, ...) U^T
    bool identity_basis = false;

    std::vector<double> u1() const { return U.col(0); }
    // Corrupted principal direction R u1 (the proof's r1; first column of R
    // when U = I — the indexing that reproduces the closed form).
    std::vector<double> r1() const { return matvec(R, u1()); }
    double r11() const { return dot(u1(), r1()); }
};

struct WorldSpec {
    int d = 8;
    double sigma1 = 4.0, sigma = 1.0, w = 1.0;
    std::optional<uint64_t> basis_seed;  // absent -> U = I
    std::optional<double> r11;           // controlled-angle corruption in [0,1]
    uint64_t corruption_seed = 0;
};

LinearWorld make_world(const WorldSpec& spec);

// Descending eigenpairs of a symmetric matrix; each eigenvector's
// largest-magnitude entry is made positive.
struct SpectralPair {
    MatD V;                  // eigenvectors in columns
    std::vector<double> S;   // eigenvalues, descending
};

// Cyclic Jacobi rotations to off-diagonal Frobenius norm < 1e-12.
SpectralPair sym_eig(const MatD& m);

// Bias-variance interpolation M(alpha) = (1-alpha) Sigma + alpha x~ x~^T.
MatD interpolated_covariance(const LinearWorld& world, const std::vector<double>& x_tilde,
                             double alpha);

// y^ = w v1(alpha)^T x~ with v1 the top eigenvector of M(alpha), sign-aligned
// with u1 for continuity with the alpha = 0 baseline.
double ttt_pca_predict(const LinearWorld& world, const std::vector<double>& x_tilde, double alpha);

// Draw x ~ N(0, Sigma).
std::vector<double> sample_x(const LinearWorld& world, Xoshiro256ss& rng);

struct RiskEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    int64_t n = 0;
};

// Monte Carlo prediction risk E[|y^ - y|] over x ~ N(0, Sigma), x~ = R x.
RiskEstimate risk(const LinearWorld& world, double alpha, int64_t n_samples, uint64_t seed);

struct EigDerivative {
    std::vector<double> vdot1;  // d/dalpha of the top eigenvector
    std::vector<double> sdot;   // d/dalpha of all eigenvalues
};

// Analytic derivatives of the spectral decomposition of M(alpha):
//   Sdot = I ⊙ (V^T Mdot V),  (V^T Vdot)_{ij} = (V^T Mdot V)_{ij} / (S_j - S_i)
// with Mdot = x~ x~^T - Sigma. Only gaps against the top eigenvalue are
// divided; a gap below 1e-8 raises a degenerate-spectrum error.
EigDerivative eigvec_derivative(const LinearWorld& world, const std::vector<double>& x_tilde,
                                double alpha);

struct AlignmentResult {
    double monte_carlo = 0.0;
    double std_error = 0.0;
    double closed_form = 0.0;  // r11 (1 - r11^2)
    int64_t n = 0;
};

// E[<vdot1(0), r1>] by Monte Carlo next to the closed form. Requires U = I
// (the proof's reduction).
AlignmentResult alignment_derivative(const LinearWorld& world, int64_t n_samples, uint64_t seed);

struct TheoremReport {
    std::vector<double> alphas;
    std::vector<double> risks;
    std::vector<double> ses;
    double risk0 = 0.0, se0 = 0.0;
    double argmin_alpha = 0.0, risk_min = 0.0, se_min = 0.0;
    double r11 = 0.0;
    bool assumption_ok = false;  // 0 < r11 < 1
    bool pass = false;           // risk(argmin) < risk(0) - 2 * combined SE
    std::string note;
};

// Risk sweep over an alpha grid; passes when some alpha > 0 strictly
// dominates the fixed model at alpha = 0.
TheoremReport theorem_check(const LinearWorld& world, const std::vector<double>& alpha_grid,
                            int64_t n_samples, uint64_t seed);

std::vector<double> default_alpha_grid();  // {0.01 ... 0.5} step 0.01

}  // namespace tttlab
