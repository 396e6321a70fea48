#include "smpc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "smpc/moments.hpp"

namespace smpc::stability {

namespace {

constexpr std::size_t kDirectLyapunovLimit = 30;

Vector normal_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

double quad(const Matrix& m, const Vector& v) { return v.dot(m * v); }

}  // namespace

Matrix dlqr(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
        R.cols() != B.cols()) {
        throw DimensionError("dlqr operand shapes disagree");
    }
    Eigen::LLT<Matrix> rl(symmetrized(R));
    if (rl.info() != Eigen::Success) throw ParameterError("LQR input weight must be positive definite");

    // Structured doubling.
    const Matrix I = Matrix::Identity(n, n);
    Matrix Ak = A;
    Matrix G = B * rl.solve(B.transpose());
    Matrix H = symmetrized(Q);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const Eigen::PartialPivLU<Matrix> lu(I + G * H);
        const Matrix A1 = Ak * lu.solve(Ak);
        const Matrix G1 = symmetrized(G + Ak * lu.solve(G * Ak.transpose()));
        const Matrix H1 = symmetrized(H + Ak.transpose() * H * lu.solve(Ak));
        if (!H1.allFinite()) break;
        const double change = (H1 - H).norm();
        Ak = A1;
        G = G1;
        H = H1;
        if (change <= 1e-15 * std::max(1.0, H.norm())) {
            converged = true;
            break;
        }
    }
    if (!converged) throw StabilityError("Riccati iteration did not converge; pair may not be stabilizable", spectral_radius(A));

    Matrix P = H;
    Matrix K;
    for (int polish = 0; polish < 3; ++polish) {
        const Matrix S = symmetrized(R + B.transpose() * P * B);
        K = -S.ldlt().solve(B.transpose() * P * A);
        const Matrix Acl = A + B * K;
        P = symmetrized(Acl.transpose() * P * Acl + Q + K.transpose() * R * K);
    }
    const Matrix S = symmetrized(R + B.transpose() * P * B);
    K = -S.ldlt().solve(B.transpose() * P * A);
    const double rho = spectral_radius(A + B * K);
    if (!(rho < 1.0)) throw StabilityError("LQR closed loop is not Schur stable", rho);
    return K;
}

Matrix terminal_gain(const galerkin::GpcDynamics& dyn, const Matrix& Q, const Matrix& R, double epsilon) {
    if (dyn.A_k.empty() || dyn.B_k.empty()) throw ParameterError("dynamics have not been projected");
    const Matrix Rreg = R + epsilon * Matrix::Identity(R.rows(), R.cols());
    const Matrix K = dlqr(dyn.A_k[0], dyn.B_k[0], Q, Rreg);
    const Matrix bigK = kron(K, Matrix::Identity(static_cast<Eigen::Index>(dyn.terms()), static_cast<Eigen::Index>(dyn.terms())));
    const double rho = spectral_radius(dyn.bigA + dyn.bigB * bigK);
    if (!(rho < 1.0)) {
        std::ostringstream os;
        os << "lifted closed loop is not Schur stable (spectral radius " << rho << ")";
        throw StabilityError(os.str(), rho);
    }
    return K;
}

Matrix solve_lyapunov(const Matrix& Acl, const Matrix& M, double delta) {
    if (!(delta > 0.0)) throw ParameterError("delta must be positive");
    const Eigen::Index n = Acl.rows();
    if (Acl.cols() != n || M.rows() != n || M.cols() != n) throw DimensionError("Lyapunov operand shapes disagree");
    const double rho = n > 0 ? spectral_radius(Acl) : 0.0;
    if (!(rho < 1.0)) throw StabilityError("Lyapunov equation has no solution: closed loop not Schur stable", rho);

    const Matrix C = (1.0 + delta) * symmetrized(M);
    Matrix P;
    if (static_cast<std::size_t>(n) <= kDirectLyapunovLimit) {
        const Matrix At = Acl.transpose();
        const Matrix sys = Matrix::Identity(n * n, n * n) - kron(At, At);
        const Eigen::PartialPivLU<Matrix> lu(sys);
        Vector vecP = lu.solve(Eigen::Map<const Vector>(C.data(), n * n));
        P = Eigen::Map<const Matrix>(vecP.data(), n, n);
        P = symmetrized(P);
        const Matrix res = Acl.transpose() * P * Acl - P + C;
        vecP = lu.solve(Eigen::Map<const Vector>(res.data(), n * n));
        P += Eigen::Map<const Matrix>(vecP.data(), n, n);
    } else {
        // Smith doubling.
        P = C;
        Matrix Ak = Acl;
        for (int it = 0; it < 64; ++it) {
            P += Ak.transpose() * P * Ak;
            Ak = Ak * Ak;
            if (Ak.cwiseAbs().maxCoeff() < 1e-18) break;
        }
    }
    return symmetrized(P);
}

double StabilityCertificate::lyapunov_residual() const {
    return (closed_loop.transpose() * P * closed_loop - P + (1.0 + delta) * bigM).norm();
}

double StabilityCertificate::stage_cost(const Vector& phi) const {
    const Vector u = bigK * phi;
    return quad(bigQ, phi) + quad(bigR, u);
}

double StabilityCertificate::terminal_cost(const Vector& phi) const { return quad(P, phi); }

double StabilityCertificate::drift(const Vector& phi) const { return -delta * quad(bigM, phi) + b; }

double StabilityCertificate::drift_direct(const Vector& phi) const {
    const Vector next = closed_loop * phi;
    return stage_cost(phi) - terminal_cost(phi) + (terminal_cost(next) + P.cwiseProduct(noise).sum());
}

StabilityCertificate make_certificate(const galerkin::GpcDynamics& dyn, const Matrix& Q, const Matrix& R,
                                      const Matrix& K, double delta) {
    if (!(delta > 0.0)) throw ParameterError("delta must be positive");
    if (static_cast<std::size_t>(K.rows()) != dyn.n_u || static_cast<std::size_t>(K.cols()) != dyn.n_x) {
        throw DimensionError("gain must be n_u × n_x");
    }
    const auto p1 = static_cast<Eigen::Index>(dyn.terms());
    const Matrix W = dyn.basis->norm_matrix();

    StabilityCertificate cert;
    cert.K = K;
    cert.bigK = kron(K, Matrix::Identity(p1, p1));
    cert.bigQ = kron(Q, W);
    cert.bigR = kron(R, W);
    cert.bigM = symmetrized(cert.bigQ + cert.bigK.transpose() * cert.bigR * cert.bigK);
    cert.closed_loop = dyn.bigA + dyn.bigB * cert.bigK;
    cert.noise = symmetrized(dyn.bigF * dyn.Sigma * dyn.bigF.transpose());
    cert.delta = delta;
    cert.spectral_radius = spectral_radius(cert.closed_loop);
    if (!(cert.spectral_radius < 1.0)) {
        std::ostringstream os;
        os << "lifted closed loop is not Schur stable (spectral radius " << cert.spectral_radius << ")";
        throw StabilityError(os.str(), cert.spectral_radius);
    }
    cert.P = solve_lyapunov(cert.closed_loop, cert.bigM, delta);
    cert.b = cert.P.cwiseProduct(cert.noise).sum();
    return cert;
}

StabilityCertificate attach_terminal_ingredients(controller::SmpcProblem& prob, double delta,
                                                 const std::optional<Matrix>& gain) {
    const Matrix K = gain ? *gain : terminal_gain(prob.dyn, prob.weights.Q, prob.weights.R, prob.weights.epsilon);
    auto cert = make_certificate(prob.dyn, prob.weights.Q, prob.weights.R, K, delta);
    prob.gain = K;
    switch (prob.weights.terminal) {
        case controller::TerminalMode::lyapunov: prob.terminal = cert.P; break;
        case controller::TerminalMode::explicit_matrix: prob.terminal = prob.weights.terminal_matrix; break;
        case controller::TerminalMode::none: prob.terminal.resize(0, 0); break;
    }
    prob.validate();
    return cert;
}

CheckReport lyapunov_check(const StabilityCertificate& cert, double tolerance) {
    CheckReport rep;
    rep.name = "lyapunov_residual";
    rep.samples = 1;
    rep.tolerance = tolerance;
    rep.worst = cert.lyapunov_residual();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cert.P, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    rep.passed = rep.worst <= tolerance && min_eig > 0.0 && cert.spectral_radius < 1.0;
    std::ostringstream os;
    os << "residual " << rep.worst << ", min eig(P) " << min_eig << ", spectral radius " << cert.spectral_radius;
    rep.detail = os.str();
    return rep;
}

std::vector<CheckReport> drift_check(const StabilityCertificate& cert, const DriftOptions& options) {
    std::vector<CheckReport> out;
    const Eigen::Index n = cert.P.rows();
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Exterior samples: directions scaled so ΦᵀMΦ = level·(1 + e), e log-uniform in [1e-6, 1e3].
    {
        CheckReport rep;
        rep.name = "drift_exterior";
        rep.tolerance = options.tolerance;
        rep.worst = -std::numeric_limits<double>::infinity();
        const double level = cert.drift_level() > 0.0 ? cert.drift_level() : 1.0;
        std::size_t drawn = 0;
        std::size_t attempts = 0;
        while (drawn < options.exterior_samples && attempts < 100 * options.exterior_samples + 100) {
            ++attempts;
            const Vector u = normal_vector(n, rng);
            const double q = quad(cert.bigM, u);
            const double e = std::pow(10.0, -6.0 + 9.0 * unif(rng));
            if (!(q > 1e-14 * u.squaredNorm())) continue;
            const Vector phi = u * std::sqrt(level * (1.0 + e) / q);
            ++drawn;
            const double g = cert.drift_direct(phi);
            if (g > rep.worst) {
                rep.worst = g;
                rep.worst_sample = phi;
            }
        }
        rep.samples = drawn;
        rep.passed = drawn == options.exterior_samples && rep.worst <= options.tolerance;
        std::ostringstream os;
        os << "max g outside D " << rep.worst << " over " << drawn << " samples";
        rep.detail = os.str();
        out.push_back(std::move(rep));
    }

    // sup over D: attained at Φ = 0.
    {
        CheckReport rep;
        rep.name = "drift_supremum";
        rep.samples = 1;
        rep.tolerance = 1e-12 * std::max(1.0, std::abs(cert.b));
        const Vector zero = Vector::Zero(n);
        rep.worst = std::abs(cert.drift_direct(zero) - cert.b);
        rep.worst_sample = zero;
        rep.passed = rep.worst <= rep.tolerance && std::abs(cert.drift(zero) - cert.b) == 0.0;
        std::ostringstream os;
        os << "g(0) = " << cert.drift_direct(zero) << ", b = " << cert.b;
        rep.detail = os.str();
        out.push_back(std::move(rep));
    }

    // Expectation of the terminal cost by sampling w.
    {
        CheckReport rep;
        rep.name = "drift_expectation_mc";
        rep.tolerance = 3.0;  // standard errors
        rep.worst = 0.0;
        const Matrix root = psd_sqrt(cert.noise);
        for (std::size_t k = 0; k < options.mc_points; ++k) {
            const Vector phi = normal_vector(n, rng) * (0.1 + unif(rng));
            const Vector next = cert.closed_loop * phi;
            double sum = 0.0;
            double sum_sq = 0.0;
            for (std::size_t d = 0; d < options.mc_draws; ++d) {
                const Vector x = next + root * normal_vector(n, rng);
                const double v = quad(cert.P, x);
                sum += v;
                sum_sq += v * v;
            }
            const double draws = static_cast<double>(options.mc_draws);
            const double mean = sum / draws;
            const double var = std::max(0.0, (sum_sq - draws * mean * mean) / (draws - 1.0));
            const double se = std::sqrt(var / draws);
            const double mc_g = cert.stage_cost(phi) - cert.terminal_cost(phi) + mean;
            const double z = se > 0.0 ? std::abs(mc_g - cert.drift(phi)) / se : std::abs(mc_g - cert.drift(phi)) * 1e12;
            if (z > rep.worst) {
                rep.worst = z;
                rep.worst_sample = phi;
            }
            rep.samples += 1;
        }
        rep.passed = rep.worst <= rep.tolerance;
        std::ostringstream os;
        os << "max |MC − analytic| " << rep.worst << " standard errors over " << rep.samples << " points";
        rep.detail = os.str();
        out.push_back(std::move(rep));
    }
    return out;
}

std::vector<CheckReport> value_bound_check(const controller::SmpcProblem& prob, const StabilityCertificate& cert,
                                           const ValueBoundOptions& options) {
    controller::SmpcProblem unc = prob;
    unc.constraints.clear();
    unc.gain = cert.K;
    unc.terminal = cert.P;
    const auto n = static_cast<Eigen::Index>(prob.dyn.lifted_states());
    const double N = static_cast<double>(prob.horizon);
    const Policy sub = Policy::constant_gain(prob.horizon, cert.K);

    CheckReport bound;
    bound.name = "value_bound";
    bound.tolerance = options.tolerance;
    bound.worst = -std::numeric_limits<double>::infinity();
    CheckReport chain;
    chain.name = "suboptimality_chain";
    chain.tolerance = options.tolerance;
    chain.worst = -std::numeric_limits<double>::infinity();

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t s = 0; s < options.samples; ++s) {
        Vector phi = Vector::Zero(n);
        if (s > 0) {
            const Vector u = normal_vector(n, rng);
            const double r = options.radius * std::pow(unif(rng), 1.0 / static_cast<double>(n));
            phi = u * (r / u.norm());
        }
        const moments::MomentState init{phi, Matrix::Zero(n, n)};
        const double vs = controller::evaluate_policy(unc, init, sub).cost;
        const double excess = vs - (cert.terminal_cost(phi) + N * cert.b);
        if (excess > bound.worst) {
            bound.worst = excess;
            bound.worst_sample = phi;
        }
        const double vstar = controller::solve(unc, init).cost;
        if (vstar - vs > chain.worst) {
            chain.worst = vstar - vs;
            chain.worst_sample = phi;
        }
    }
    bound.samples = chain.samples = options.samples;
    bound.passed = bound.worst <= options.tolerance;
    chain.passed = chain.worst <= options.tolerance;
    std::ostringstream a;
    a << "max V_s − (c_f + N b) = " << bound.worst;
    bound.detail = a.str();
    std::ostringstream c;
    c << "max V_opt − V_s = " << chain.worst;
    chain.detail = c.str();
    return {bound, chain};
}

BoundednessReport boundedness_trace(const std::vector<double>& values) {
    BoundednessReport rep;
    rep.values = values;
    const std::size_t T = values.size();
    if (T < 5) return rep;
    auto window_mean = [&](std::size_t lo, std::size_t hi) {
        hi = std::max(hi, lo + 1);
        double s = 0.0;
        for (std::size_t t = lo; t < hi; ++t) s += values[t];
        return s / static_cast<double>(hi - lo);
    };
    rep.middle_mean = window_mean(2 * T / 5, 3 * T / 5);
    rep.tail_mean = window_mean(4 * T / 5, T);
    rep.divergent = !std::isfinite(rep.tail_mean) || rep.tail_mean > 2.0 * rep.middle_mean;
    return rep;
}

AssumptionGap assumption_gap(const controller::SmpcProblem& prob, const Matrix& A_hat, const Matrix& B_hat,
                             const Vector& x, std::size_t draws, std::uint64_t seed) {
    const std::size_t terms = prob.dyn.terms();
    const auto sol = controller::solve(prob, moments::MomentState::observed(x, terms));
    const auto lifted = galerkin::lift_policy(sol.policy, terms);
    const auto traj = moments::propagate(prob.dyn, lifted, moments::MomentState::observed(x, terms), 1);

    Policy shifted;
    for (std::size_t i = 1; i < prob.horizon; ++i) {
        shifted.gains.push_back(sol.policy.gains[i]);
        shifted.offsets.push_back(sol.policy.offsets[i]);
    }
    const Matrix K = prob.gain.size() ? prob.gain : Matrix::Zero(B_hat.cols(), A_hat.cols());
    shifted.gains.push_back(K);
    shifted.offsets.push_back(Vector::Zero(K.rows()));

    controller::SmpcProblem unc = prob;
    unc.constraints.clear();

    AssumptionGap gap;
    gap.rhs = controller::evaluate_policy(unc, traj[1], shifted).cost;

    const Vector u = sol.policy.offsets.front() + sol.policy.gains.front() * x;
    const Vector nominal = A_hat * x + B_hat * u;
    const Matrix root = psd_sqrt(prob.system.Sigma);
    std::mt19937_64 rng(seed);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        const Vector w = root * normal_vector(root.rows(), rng);
        const Vector x1 = nominal + prob.system.F * w;
        const double v = controller::evaluate_policy(unc, moments::MomentState::observed(x1, terms), shifted).cost;
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(std::max<std::size_t>(draws, 1));
    gap.lhs = sum / n;
    gap.lhs_se = draws > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * gap.lhs * gap.lhs) / (n - 1.0)) / n) : 0.0;
    return gap;
}

}  // namespace smpc::stability
