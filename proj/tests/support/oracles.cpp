#include "oracles.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace oracle {

using smpc::galerkin::Monomial;
using smpc::galerkin::Polynomial;
using smpc::galerkin::PolynomialMatrix;
using smpc::galerkin::UncertainLinearSystem;
using smpc::pce::MarginalDistribution;

UncertainLinearSystem reactor_system() {
    UncertainLinearSystem sys;
    sys.n_x = 2;
    sys.n_u = 1;
    sys.n_w = 2;
    sys.theta_dists = {MarginalDistribution::beta4(0.923, 0.963, 2.0, 5.0)};
    sys.A = PolynomialMatrix(2, 2);
    sys.A(0, 0) = Polynomial({Monomial{{1}, 1.0}});
    sys.A(1, 0) = Polynomial::constant(0.088, 1);
    sys.A(1, 1) = Polynomial::constant(0.819, 1);
    Matrix B(2, 1);
    B << -0.005, -0.002;
    sys.B = PolynomialMatrix::constant(B, 1);
    sys.F = Matrix::Identity(2, 2);
    sys.Sigma = 1e-4 * Matrix::Identity(2, 2);
    return sys;
}

UncertainLinearSystem scalar_system(const MarginalDistribution& a_law, double b, double noise_variance) {
    UncertainLinearSystem sys;
    sys.n_x = sys.n_u = sys.n_w = 1;
    sys.theta_dists = {a_law};
    sys.A = PolynomialMatrix(1, 1);
    sys.A(0, 0) = Polynomial({Monomial{{1}, 1.0}});
    sys.B = PolynomialMatrix::constant(Matrix::Constant(1, 1, b), 1);
    sys.F = Matrix::Identity(1, 1);
    sys.Sigma = Matrix::Constant(1, 1, noise_variance);
    return sys;
}

UncertainLinearSystem fixed_system(const Matrix& A, const Matrix& B, const Matrix& Sigma) {
    UncertainLinearSystem sys;
    sys.n_x = static_cast<std::size_t>(A.rows());
    sys.n_u = static_cast<std::size_t>(B.cols());
    sys.n_w = static_cast<std::size_t>(A.rows());
    sys.theta_dists = {MarginalDistribution::point(0.0)};
    sys.A = PolynomialMatrix::constant(A, 1);
    sys.B = PolynomialMatrix::constant(B, 1);
    sys.F = Matrix::Identity(A.rows(), A.rows());
    sys.Sigma = Sigma;
    return sys;
}

QpSolution enumerate_active_sets(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b) {
    const Eigen::Index n = H.rows();
    const Eigen::Index m = A.rows();
    if (m > 20) throw std::invalid_argument("too many rows to enumerate");
    QpSolution best;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        std::vector<Eigen::Index> act;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (mask & (1u << j)) act.push_back(j);
        }
        const auto k = static_cast<Eigen::Index>(act.size());
        if (k > n) continue;
        Matrix kkt = Matrix::Zero(n + k, n + k);
        Vector rhs(n + k);
        kkt.topLeftCorner(n, n) = H;
        rhs.head(n) = -f;
        for (Eigen::Index a = 0; a < k; ++a) {
            kkt.block(n + a, 0, 1, n) = A.row(act[static_cast<std::size_t>(a)]);
            kkt.block(0, n + a, n, 1) = A.row(act[static_cast<std::size_t>(a)]).transpose();
            rhs(n + a) = b(act[static_cast<std::size_t>(a)]);
        }
        Eigen::FullPivLU<Matrix> lu(kkt);
        if (lu.rank() < n + k) continue;
        const Vector sol = lu.solve(rhs);
        const Vector z = sol.head(n);
        if (m > 0 && ((A * z - b).array() > 1e-9).any()) continue;
        const double obj = 0.5 * z.dot(H * z) + f.dot(z);
        if (!best.feasible || obj < best.objective) {
            best.feasible = true;
            best.z = z;
            best.objective = obj;
        }
    }
    return best;
}

namespace {

// x_i = free_i x0 + forced_i u
void predictions(const Matrix& A, const Matrix& B, std::size_t N, std::vector<Matrix>& free, std::vector<Matrix>& forced) {
    const Eigen::Index nx = A.rows();
    const Eigen::Index nu = B.cols();
    free.assign(1, Matrix::Identity(nx, nx));
    forced.assign(1, Matrix::Zero(nx, nu * static_cast<Eigen::Index>(N)));
    for (std::size_t i = 0; i < N; ++i) {
        free.push_back(A * free.back());
        Matrix next = A * forced.back();
        next.block(0, nu * static_cast<Eigen::Index>(i), nx, nu) += B;
        forced.push_back(next);
    }
}

Matrix sqrt_psd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Vector lq_open_loop(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& S,
                    const Vector& x0, std::size_t N) {
    std::vector<Matrix> free, forced;
    predictions(A, B, N, free, forced);
    const Eigen::Index nx = A.rows();
    const Eigen::Index nu = B.cols();
    const Eigen::Index nz = nu * static_cast<Eigen::Index>(N);
    const Matrix q = sqrt_psd(Q), r = sqrt_psd(R), s = sqrt_psd(S);
    const Eigen::Index rows = nx * static_cast<Eigen::Index>(N + 1) + nz;
    Matrix M = Matrix::Zero(rows, nz);
    Vector rhs = Vector::Zero(rows);
    for (std::size_t i = 0; i <= N; ++i) {
        const Matrix& w = i < N ? q : s;
        M.block(nx * static_cast<Eigen::Index>(i), 0, nx, nz) = w * forced[i];
        rhs.segment(nx * static_cast<Eigen::Index>(i), nx) = -w * free[i] * x0;
    }
    for (std::size_t i = 0; i < N; ++i) {
        M.block(nx * static_cast<Eigen::Index>(N + 1) + nu * static_cast<Eigen::Index>(i), nu * static_cast<Eigen::Index>(i), nu, nu) = r;
    }
    return M.colPivHouseholderQr().solve(rhs);
}

Vector riccati_first_input(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& S,
                           const Vector& x0, std::size_t N) {
    Matrix P = S;
    Matrix K;
    for (std::size_t k = 0; k < N; ++k) {
        const Matrix G = R + B.transpose() * P * B;
        K = -G.inverse() * B.transpose() * P * A;
        P = Q + A.transpose() * P * A + A.transpose() * P * B * K;
        P = 0.5 * (P + P.transpose());
    }
    return K * x0;
}

namespace {

double draw(const MarginalDistribution& d, std::mt19937_64& rng) {
    using smpc::pce::DistributionKind;
    switch (d.kind()) {
        case DistributionKind::uniform: return std::uniform_real_distribution<double>(d.lower(), d.upper())(rng);
        case DistributionKind::gaussian:
            return std::normal_distribution<double>(d.location(), std::sqrt(d.gaussian_variance()))(rng);
        case DistributionKind::beta4: {
            // Inverse of a ratio of gammas.
            const double x = std::gamma_distribution<double>(d.shape_alpha(), 1.0)(rng);
            const double y = std::gamma_distribution<double>(d.shape_beta(), 1.0)(rng);
            return d.lower() + (d.upper() - d.lower()) * x / (x + y);
        }
        case DistributionKind::point: return d.location();
    }
    return 0.0;
}

}  // namespace

SampleMoments brute_force(const UncertainLinearSystem& sys, const Vector& x0, const smpc::Policy& policy,
                          std::size_t stages, std::size_t samples, std::uint64_t seed, const Matrix& Q,
                          const Matrix& R) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const Matrix root = sqrt_psd(sys.Sigma);
    const Eigen::Index nx = x0.size();
    std::vector<Vector> s1(stages + 1, Vector::Zero(nx)), s2 = s1, s4 = s1;
    std::vector<std::vector<Vector>> paths(samples);
    double c1 = 0.0, c2 = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> theta;
        for (const auto& d : sys.theta_dists) theta.push_back(draw(d, rng));
        const Matrix A = sys.A.evaluate(theta);
        const Matrix B = sys.B.evaluate(theta);
        Vector x = x0;
        double cost = 0.0;
        paths[s].push_back(x);
        for (std::size_t i = 0; i < stages; ++i) {
            const Vector u = policy.offsets[i] + policy.gains[i] * x;
            if (Q.size()) cost += x.dot(Q * x) + u.dot(R * u);
            Vector z(root.cols());
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = nd(rng);
            x = A * x + B * u + sys.F * (root * z);
            paths[s].push_back(x);
        }
        c1 += cost;
        c2 += cost * cost;
    }
    SampleMoments out;
    const double S = static_cast<double>(samples);
    for (std::size_t i = 0; i <= stages; ++i) {
        Vector mean = Vector::Zero(nx);
        for (const auto& p : paths) mean += p[i];
        mean /= S;
        Vector m2 = Vector::Zero(nx), m4 = Vector::Zero(nx);
        for (const auto& p : paths) {
            const Vector d = p[i] - mean;
            m2 += d.cwiseAbs2();
            m4 += d.cwiseAbs2().cwiseAbs2();
        }
        m2 /= S;
        m4 /= S;
        out.mean.push_back(mean);
        out.variance.push_back(m2 * S / (S - 1.0));
        out.mean_se.push_back((m2 / S).cwiseSqrt());
        out.variance_se.push_back(((m4 - m2.cwiseAbs2()).cwiseMax(0.0) / S).cwiseSqrt());
    }
    out.stage_cost = c1 / S;
    out.stage_cost_se = std::sqrt(std::max(0.0, c2 / S - out.stage_cost * out.stage_cost) / S);
    return out;
}

namespace {

// Gauss–Legendre nodes on [-1, 1] by Newton iteration on P_n.
void legendre_rule(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(n), 0.0);
    w.assign(static_cast<std::size_t>(n), 0.0);
    const double pi = std::acos(-1.0);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[static_cast<std::size_t>(i)] = z;
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
}

// Jacobi P_k^(a,b)(s), k = 0..m, standard normalization.
std::vector<double> jacobi_values(int m, double a, double b, double s) {
    std::vector<double> p(static_cast<std::size_t>(m) + 1, 1.0);
    if (m >= 1) p[1] = (a + 1.0) + (a + b + 2.0) * (s - 1.0) / 2.0;
    for (int n = 2; n <= m; ++n) {
        const double c = 2.0 * n + a + b;
        const double lhs = 2.0 * n * (n + a + b) * (c - 2.0);
        const double t1 = (c - 1.0) * (c * (c - 2.0) * s + a * a - b * b);
        const double t2 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * c;
        p[static_cast<std::size_t>(n)] = (t1 * p[static_cast<std::size_t>(n) - 1] - t2 * p[static_cast<std::size_t>(n) - 2]) / lhs;
    }
    return p;
}

}  // namespace

std::pair<double, double> terminal_term(const UncertainLinearSystem& sys, const Vector& x0, const smpc::Policy& policy,
                                        std::size_t N, const Matrix& S, int max_degree, std::size_t samples,
                                        std::uint64_t seed) {
    if (sys.theta_dists.size() != 1) throw std::invalid_argument("single-parameter systems only");
    const auto& law = sys.theta_dists[0];
    // Density on s ∈ [-1, 1] and the matching polynomial family.
    double a = 0.0, b = 0.0;
    if (law.kind() == smpc::pce::DistributionKind::beta4) {
        a = law.shape_beta() - 1.0;
        b = law.shape_alpha() - 1.0;
    } else if (law.kind() != smpc::pce::DistributionKind::uniform) {
        throw std::invalid_argument("bounded laws only");
    }
    std::vector<double> gx, gw;
    legendre_rule(40, gx, gw);
    std::vector<double> dens(gx.size());
    double mass = 0.0;
    for (std::size_t q = 0; q < gx.size(); ++q) {
        dens[q] = gw[q] * std::pow(1.0 - gx[q], a) * std::pow(1.0 + gx[q], b);
        mass += dens[q];
    }
    for (auto& d : dens) d /= mass;

    const auto P1 = static_cast<std::size_t>(max_degree) + 1;
    std::vector<std::vector<double>> phi(gx.size());
    std::vector<double> norms(P1, 0.0);
    std::vector<Matrix> A(gx.size()), B(gx.size());
    for (std::size_t q = 0; q < gx.size(); ++q) {
        phi[q] = jacobi_values(max_degree, a, b, gx[q]);
        for (std::size_t k = 0; k < P1; ++k) norms[k] += dens[q] * phi[q][k] * phi[q][k];
        const double theta = law.lower() + (law.upper() - law.lower()) * (gx[q] + 1.0) / 2.0;
        A[q] = sys.A.evaluate(std::vector<double>{theta});
        B[q] = sys.B.evaluate(std::vector<double>{theta});
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const Matrix root = sqrt_psd(sys.Sigma);
    const Eigen::Index nx = x0.size();
    double t1 = 0.0, t2 = 0.0;
    std::vector<Vector> w(N);
    for (std::size_t s = 0; s < samples; ++s) {
        for (auto& wi : w) {
            Vector z(root.cols());
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = nd(rng);
            wi = sys.F * (root * z);
        }
        Vector Phi = Vector::Zero(nx * static_cast<Eigen::Index>(P1));
        for (std::size_t q = 0; q < gx.size(); ++q) {
            Vector x = x0;
            for (std::size_t i = 0; i < N; ++i) x = A[q] * x + B[q] * (policy.offsets[i] + policy.gains[i] * x) + w[i];
            for (Eigen::Index r = 0; r < nx; ++r) {
                for (std::size_t k = 0; k < P1; ++k) {
                    Phi(r * static_cast<Eigen::Index>(P1) + static_cast<Eigen::Index>(k)) += dens[q] * x(r) * phi[q][k] / norms[k];
                }
            }
        }
        const double v = Phi.dot(S * Phi);
        t1 += v;
        t2 += v * v;
    }
    const double n = static_cast<double>(samples);
    const double mean = t1 / n;
    return {mean, std::sqrt(std::max(0.0, t2 / n - mean * mean) / n)};
}

}  // namespace oracle
