#include "tttlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tttlab/parallel.hpp"

namespace tttlab {

MatD matmul(const MatD& a, const MatD& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: incompatible matrices");
    MatD c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double av = a(i, k);
            for (int j = 0; j < b.cols; ++j) c(i, j) += av * b(k, j);
        }
    return c;
}

MatD transpose(const MatD& m) {
    MatD t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> matvec(const MatD& m, const std::vector<double>& v) {
    if (m.cols != static_cast<int>(v.size())) throw ShapeError("matvec: length mismatch");
    std::vector<double> r(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) r[i] += m(i, j) * v[j];
    return r;
}

double max_abs_asymmetry(const MatD& m) {
    double worst = 0.0;
    for (int i = 0; i < m.rows; ++i)
        for (int j = i + 1; j < m.cols; ++j)
            worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

double orthogonality_defect(const MatD& q) {
    const MatD gram = matmul(transpose(q), q);
    double worst = 0.0;
    for (int i = 0; i < gram.rows; ++i)
        for (int j = 0; j < gram.cols; ++j)
            worst = std::max(worst, std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

namespace {

// Flip each column so its largest-magnitude entry is positive.
void fix_column_signs(MatD& m) {
    for (int j = 0; j < m.cols; ++j) {
        int arg = 0;
        for (int i = 1; i < m.rows; ++i)
            if (std::abs(m(i, j)) > std::abs(m(arg, j))) arg = i;
        if (m(arg, j) < 0)
            for (int i = 0; i < m.rows; ++i) m(i, j) = -m(i, j);
    }
}

// Orthonormal basis from a seeded Gaussian matrix via modified Gram-Schmidt,
// deterministic given the seed.
MatD random_orthogonal(int d, uint64_t seed) {
    Xoshiro256ss rng(seed);
    MatD q(d, d);
    for (int j = 0; j < d; ++j) {
        std::vector<double> v(d);
        double norm = 0.0;
        do {
            for (int i = 0; i < d; ++i) v[i] = rng.normal();
            for (int k = 0; k < j; ++k) {
                double proj = 0.0;
                for (int i = 0; i < d; ++i) proj += q(i, k) * v[i];
                for (int i = 0; i < d; ++i) v[i] -= proj * q(i, k);
            }
            norm = std::sqrt(dot(v, v));
        } while (norm < 1e-8);
        for (int i = 0; i < d; ++i) q(i, j) = v[i] / norm;
    }
    fix_column_signs(q);
    return q;
}

double off_diag_frobenius(const MatD& m) {
    double s = 0.0;
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (i != j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
}

}  // namespace

LinearWorld make_world(const WorldSpec& spec) {
    if (spec.d < 2) throw ConfigError("world: d must be >= 2");
    if (!(spec.sigma1 > spec.sigma) || !(spec.sigma > 0.0))
        throw ConfigError("world: eigenvalue-gap violation (need sigma1 > sigma > 0)");
    if (spec.r11 && (*spec.r11 < 0.0 || *spec.r11 > 1.0))
        throw ConfigError("world: r11 outside [0,1]");

    LinearWorld world;
    world.d = spec.d;
    world.sigma1 = spec.sigma1;
    world.sigma = spec.sigma;
    world.w = spec.w;
    world.identity_basis = !spec.basis_seed.has_value();
    world.U = world.identity_basis ? MatD::identity(spec.d)
                                   : random_orthogonal(spec.d, *spec.basis_seed);

    const std::vector<double> u = world.U.col(0);
    if (spec.r11) {
        // Rotation by arccos(r11) in the plane spanned by u1 and a seeded
        // orthogonal direction; identity elsewhere.
        Xoshiro256ss rng(derive_seed(spec.corruption_seed, 0x5231));
        std::vector<double> q(spec.d);
        double norm = 0.0;
        do {
            for (int i = 0; i < spec.d; ++i) q[i] = rng.normal();
            const double proj = dot(q, u);
            for (int i = 0; i < spec.d; ++i) q[i] -= proj * u[i];
            norm = std::sqrt(dot(q, q));
        } while (norm < 1e-8);
        for (double& v : q) v /= norm;
        const double c = *spec.r11;
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        world.R = MatD::identity(spec.d);
        for (int i = 0; i < spec.d; ++i)
            for (int j = 0; j < spec.d; ++j)
                world.R(i, j) += (c - 1.0) * (u[i] * u[j] + q[i] * q[j]) +
                                 s * (q[i] * u[j] - u[i] * q[j]);
    } else {
        world.R = random_orthogonal(spec.d, derive_seed(spec.corruption_seed, 0x5230));
    }

    world.Sigma = MatD(spec.d, spec.d);
    for (int i = 0; i < spec.d; ++i)
        for (int j = 0; j < spec.d; ++j) {
            double s = 0.0;
            for (int k = 0; k < spec.d; ++k) {
                const double eig = k == 0 ? spec.sigma1 : spec.sigma;
                s += world.U(i, k) * eig * world.U(j, k);
            }
            world.Sigma(i, j) = s;
        }

    if (orthogonality_defect(world.U) > 1e-10) throw NumericError("world: U not orthogonal");
    if (orthogonality_defect(world.R) > 1e-10) throw NumericError("world: R not orthogonal");
    return world;
}

SpectralPair sym_eig(const MatD& m) {
    if (m.rows != m.cols) throw ShapeError("sym_eig: not square");
    if (max_abs_asymmetry(m) > 1e-12) throw NumericError("sym_eig: input not symmetric");
    const int n = m.rows;
    MatD a = m;
    MatD v = MatD::identity(n);

    constexpr int kMaxSweeps = 100;
    constexpr double kTarget = 1e-12;
    int sweep = 0;
    for (; sweep < kMaxSweeps && off_diag_frobenius(a) >= kTarget; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i != p && i != q) {
                        const double aip = a(i, p), aiq = a(i, q);
                        a(i, p) = a(p, i) = c * aip - s * aiq;
                        a(i, q) = a(q, i) = s * aip + c * aiq;
                    }
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    if (off_diag_frobenius(a) >= kTarget)
        throw NumericError("sym_eig: no convergence in 100 sweeps");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) > a(j, j); });

    SpectralPair out;
    out.S.resize(n);
    out.V = MatD(n, n);
    for (int j = 0; j < n; ++j) {
        out.S[j] = a(order[j], order[j]);
        for (int i = 0; i < n; ++i) out.V(i, j) = v(i, order[j]);
    }
    fix_column_signs(out.V);
    return out;
}

MatD interpolated_covariance(const LinearWorld& world, const std::vector<double>& x_tilde,
                             double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha outside [0,1]");
    if (static_cast<int>(x_tilde.size()) != world.d) throw ShapeError("x~ has wrong dimension");
    MatD m(world.d, world.d);
    for (int i = 0; i < world.d; ++i)
        for (int j = 0; j < world.d; ++j)
            m(i, j) = (1.0 - alpha) * world.Sigma(i, j) + alpha * x_tilde[i] * x_tilde[j];
    return m;
}

double ttt_pca_predict(const LinearWorld& world, const std::vector<double>& x_tilde, double alpha) {
    const SpectralPair eig = sym_eig(interpolated_covariance(world, x_tilde, alpha));
    std::vector<double> v1 = eig.V.col(0);
    const double align = dot(v1, world.u1());
    if (align < 0.0)
        for (double& v : v1) v = -v;
    return world.w * dot(v1, x_tilde);
}

std::vector<double> sample_x(const LinearWorld& world, Xoshiro256ss& rng) {
    std::vector<double> z(world.d);
    for (int k = 0; k < world.d; ++k) {
        const double eig = k == 0 ? world.sigma1 : world.sigma;
        z[k] = std::sqrt(eig) * rng.normal();
    }
    return world.identity_basis ? z : matvec(world.U, z);
}

RiskEstimate risk(const LinearWorld& world, double alpha, int64_t n_samples, uint64_t seed) {
    if (n_samples < 2) throw ConfigError("risk: need n >= 2");
    Xoshiro256ss rng(seed);
    const std::vector<double> u = world.u1();
    double sum = 0.0, sum_sq = 0.0;
    for (int64_t i = 0; i < n_samples; ++i) {
        const std::vector<double> x = sample_x(world, rng);
        const double y = world.w * dot(u, x);
        const std::vector<double> xt = matvec(world.R, x);
        const double err = std::abs(ttt_pca_predict(world, xt, alpha) - y);
        sum += err;
        sum_sq += err * err;
    }
    RiskEstimate out;
    out.n = n_samples;
    out.estimate = sum / double(n_samples);
    const double var =
        std::max(0.0, (sum_sq - double(n_samples) * out.estimate * out.estimate) /
                          double(n_samples - 1));
    out.std_error = std::sqrt(var / double(n_samples));
    return out;
}

EigDerivative eigvec_derivative(const LinearWorld& world, const std::vector<double>& x_tilde,
                                double alpha) {
    const int d = world.d;
    const SpectralPair eig = sym_eig(interpolated_covariance(world, x_tilde, alpha));

    // Mdot = x~ x~^T - Sigma
    MatD mdot(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) mdot(i, j) = x_tilde[i] * x_tilde[j] - world.Sigma(i, j);
    const MatD w = matmul(transpose(eig.V), matmul(mdot, eig.V));

    EigDerivative out;
    out.sdot.resize(d);
    for (int i = 0; i < d; ++i) out.sdot[i] = w(i, i);

    std::vector<double> k(d, 0.0);
    for (int i = 1; i < d; ++i) {
        const double gap = eig.S[0] - eig.S[i];
        if (gap < 1e-8)
            throw NumericError("eigvec_derivative: degenerate spectrum (gap " +
                               std::to_string(gap) + ")");
        k[i] = w(i, 0) / gap;
    }
    out.vdot1.assign(d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int j = 1; j < d; ++j) out.vdot1[i] += eig.V(i, j) * k[j];
    return out;
}

AlignmentResult alignment_derivative(const LinearWorld& world, int64_t n_samples, uint64_t seed) {
    if (!world.identity_basis)
        throw ConfigError("alignment_derivative requires a world with U = I");
    if (n_samples < 2) throw ConfigError("alignment: need n >= 2");
    const double r11 = world.r11();
    AlignmentResult out;
    out.closed_form = r11 * (1.0 - r11 * r11);
    out.n = n_samples;

    const std::vector<double> r1 = world.r1();
    Xoshiro256ss rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (int64_t i = 0; i < n_samples; ++i) {
        const std::vector<double> x = sample_x(world, rng);
        const std::vector<double> xt = matvec(world.R, x);
        const EigDerivative ed = eigvec_derivative(world, xt, 0.0);
        const double v = dot(ed.vdot1, r1);
        sum += v;
        sum_sq += v * v;
    }
    out.monte_carlo = sum / double(n_samples);
    const double var =
        std::max(0.0, (sum_sq - double(n_samples) * out.monte_carlo * out.monte_carlo) /
                          double(n_samples - 1));
    out.std_error = std::sqrt(var / double(n_samples));
    return out;
}

std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 50; ++i) grid.push_back(i * 0.01);
    return grid;
}

TheoremReport theorem_check(const LinearWorld& world, const std::vector<double>& alpha_grid,
                            int64_t n_samples, uint64_t seed) {
    if (alpha_grid.empty()) throw ConfigError("theorem_check: empty alpha grid");
    TheoremReport rep;
    rep.alphas = alpha_grid;
    rep.risks.resize(alpha_grid.size());
    rep.ses.resize(alpha_grid.size());
    rep.r11 = world.r11();

    const RiskEstimate base = risk(world, 0.0, n_samples, derive_seed(seed, 0));
    rep.risk0 = base.estimate;
    rep.se0 = base.std_error;

    std::vector<RiskEstimate> estimates(alpha_grid.size());
    parallel_for(static_cast<int>(alpha_grid.size()), [&](int k) {
        estimates[k] = risk(world, alpha_grid[k], n_samples, derive_seed(seed, uint64_t(k) + 1));
    });
    size_t arg = 0;
    for (size_t k = 0; k < alpha_grid.size(); ++k) {
        rep.risks[k] = estimates[k].estimate;
        rep.ses[k] = estimates[k].std_error;
        if (rep.risks[k] < rep.risks[arg]) arg = k;
    }
    rep.argmin_alpha = alpha_grid[arg];
    rep.risk_min = rep.risks[arg];
    rep.se_min = rep.ses[arg];

    rep.assumption_ok = rep.r11 > 1e-9 && rep.r11 < 1.0 - 1e-9;
    const double combined_se = std::sqrt(rep.se0 * rep.se0 + rep.se_min * rep.se_min);
    const bool dominated = rep.risk_min < rep.risk0 - 2.0 * combined_se;
    rep.pass = rep.assumption_ok && dominated;
    if (!rep.assumption_ok)
        rep.note = "assumption violated: requires 0 < r11 < 1, got r11 = " + std::to_string(rep.r11);
    else if (!dominated)
        rep.note = "no alpha on the grid dominated the baseline by 2 combined SE";
    else
        rep.note = "baseline strictly dominated at alpha = " + std::to_string(rep.argmin_alpha);
    return rep;
}

}  // namespace tttlab
