#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "smpc/experiment.hpp"
#include "smpc/sim.hpp"
#include "smpc/stability.hpp"

using namespace smpc;
using namespace smpc::stability;

namespace {

Matrix random_stable(std::mt19937_64& rng, Eigen::Index n, double radius) {
    std::normal_distribution<double> nd;
    Matrix A = Matrix::NullaryExpr(n, n, [&] { return nd(rng); });
    return A * (radius / spectral_radius(A));
}

controller::CostWeights weights(const Matrix& Q, const Matrix& R) {
    controller::CostWeights w;
    w.Q = Q;
    w.R = R;
    w.terminal = controller::TerminalMode::lyapunov;
    return w;
}

experiment::Setup reactor_setup() {
    return experiment::build(config::load_config(SMPC_SOURCE_DIR "/configs/vandevusse.json"));
}

}  // namespace

TEST(Dlqr, ScalarRiccati) {
    const Matrix K = dlqr(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0), Matrix::Identity(1, 1),
                          Matrix::Identity(1, 1));
    EXPECT_NEAR(K(0, 0), oracle::frozen::scalar_dare_K, 1e-12);
    EXPECT_LT(std::abs(0.5 + K(0, 0)), 1.0);
    // K = −b p a / (r + b² p) with the frozen DARE solution.
    const double p = oracle::frozen::scalar_dare_P;
    EXPECT_NEAR(K(0, 0), -0.5 * p / (1.0 + p), 1e-12);
}

TEST(Dlqr, MatchesLongHorizonRiccati) {
    std::mt19937_64 rng(5);
    const Matrix A = random_stable(rng, 3, 1.3);
    const Matrix B = (Matrix(3, 2) << 1, 0, 0, 1, 0.5, 0.5).finished();
    const Matrix K = dlqr(A, B, Matrix::Identity(3, 3), Matrix::Identity(2, 2));
    const Vector x = Vector::Ones(3);
    const Vector ref = oracle::riccati_first_input(A, B, Matrix::Identity(3, 3), Matrix::Identity(2, 2),
                                                   Matrix::Zero(3, 3), x, 400);
    EXPECT_LE((K * x - ref).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(spectral_radius(A + B * K), 1.0);
}

TEST(Dlqr, Errors) {
    EXPECT_THROW(dlqr(Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)),
                 ParameterError);
    EXPECT_THROW(dlqr(Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)),
                 StabilityError);
}

TEST(Lyapunov, ScalarClosedForm) {
    const Matrix P = solve_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1), 0.1);
    EXPECT_NEAR(P(0, 0), oracle::frozen::scalar_lyapunov_P, 1e-12);
}

TEST(Lyapunov, ZeroRightHandSide) {
    std::mt19937_64 rng(1);
    EXPECT_TRUE(solve_lyapunov(random_stable(rng, 3, 0.8), Matrix::Zero(3, 3), 0.1).isZero(0.0));
}

TEST(Lyapunov, RandomInstancesResubstitute) {
    std::mt19937_64 rng(2);
    for (Eigen::Index n : {4, 4, 4, 12, 40}) {
        const Matrix A = random_stable(rng, n, 0.9);
        const Matrix G = Matrix::NullaryExpr(n, n, [&] { return std::normal_distribution<double>()(rng); });
        const Matrix M = G * G.transpose();
        const Matrix P = solve_lyapunov(A, M, 0.2);
        const double res = (A.transpose() * P * A - P + 1.2 * M).norm();
        EXPECT_LE(res, 1e-10 * std::max(1.0, P.norm())) << n;
        EXPECT_TRUE(P == P.transpose());
    }
}

TEST(Lyapunov, UnstableHasNoSolution) {
    try {
        solve_lyapunov(Matrix::Constant(1, 1, 1.5), Matrix::Ones(1, 1), 0.1);
        FAIL();
    } catch (const StabilityError& e) {
        EXPECT_NEAR(e.spectral_radius(), 1.5, 1e-14);
    }
    EXPECT_THROW(solve_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1), 0.0), ParameterError);
}

TEST(Certificate, ReactorIngredients) {
    const auto setup = reactor_setup();
    const auto& cert = setup.certificate;
    EXPECT_LT(cert.spectral_radius, 1.0);
    EXPECT_LE(cert.lyapunov_residual(), 1e-9);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(cert.P).eigenvalues().minCoeff(), 0.0);
    EXPECT_TRUE(cert.bigK == kron(cert.K, Matrix::Identity(6, 6)));
    EXPECT_NEAR(cert.b, (setup.problem.dyn.bigF.transpose() * cert.P * setup.problem.dyn.bigF * setup.problem.dyn.Sigma).trace(),
                1e-15);
    EXPECT_TRUE(setup.problem.terminal == cert.P);
    EXPECT_TRUE(lyapunov_check(cert).passed);
}

TEST(Certificate, StableZeroGainPath) {
    const auto sys = oracle::reactor_system();
    const auto basis = pce::build_basis(sys.theta_dists, 3);
    const auto dyn = galerkin::project_system(sys, basis);
    const Matrix K = Matrix::Zero(1, 2);
    const auto cert = make_certificate(dyn, Matrix::Identity(2, 2), Matrix::Identity(1, 1), K, 0.1);
    EXPECT_NEAR(cert.spectral_radius, spectral_radius(dyn.bigA), 1e-14);
    // A huge input weight drives the LQR gain to zero.
    const Matrix Kbig = terminal_gain(dyn, Matrix::Identity(2, 2), Matrix::Constant(1, 1, 1e12));
    EXPECT_LE(Kbig.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Certificate, UnstabilizableLiftIsReported) {
    const auto sys = oracle::scalar_system(pce::MarginalDistribution::uniform(0.5, 1.5), 0.0, 0.1);
    const auto basis = pce::build_basis(sys.theta_dists, 2);
    const auto dyn = galerkin::project_system(sys, basis);
    try {
        make_certificate(dyn, Matrix::Identity(1, 1), Matrix::Identity(1, 1), Matrix::Zero(1, 1), 0.1);
        FAIL();
    } catch (const StabilityError& e) {
        EXPECT_GE(e.spectral_radius(), 1.0);
    }
    EXPECT_THROW(make_certificate(dyn, Matrix::Identity(1, 1), Matrix::Identity(1, 1), Matrix::Zero(1, 1), -1.0),
                 ParameterError);
}

TEST(Drift, AnalyticIdentity) {
    const auto cert = reactor_setup().certificate;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int s = 0; s < 200; ++s) {
        const Vector phi = Vector::NullaryExpr(cert.P.rows(), [&] { return nd(rng) * std::pow(10.0, s % 5 - 2); });
        const double a = cert.drift(phi), d = cert.drift_direct(phi);
        EXPECT_NEAR(a, d, 1e-10 * std::max(1.0, std::abs(a)));
    }
}

TEST(Drift, OriginAndBoundary) {
    const auto cert = reactor_setup().certificate;
    const Vector zero = Vector::Zero(cert.P.rows());
    EXPECT_EQ(cert.drift(zero), cert.b);
    EXPECT_NEAR(cert.drift_direct(zero), cert.b, 1e-16);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (int s = 0; s < 20; ++s) {
        const Vector u = Vector::NullaryExpr(cert.P.rows(), [&] { return nd(rng); });
        const Vector phi = u * std::sqrt(cert.drift_level() / u.dot(cert.bigM * u));
        EXPECT_NEAR(cert.drift(phi), 0.0, 1e-12 * cert.b + 1e-18);
    }
}

TEST(Drift, ReactorChecksPass) {
    const auto cert = reactor_setup().certificate;
    DriftOptions opts;
    opts.mc_draws = 20000;
    for (const auto& r : drift_check(cert, opts)) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(ValueBound, ReactorChecksPass) {
    const auto setup = reactor_setup();
    ValueBoundOptions opts;
    opts.samples = 100;
    for (const auto& r : value_bound_check(setup.problem, setup.certificate, opts)) {
        EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    }
}

TEST(ValueBound, OriginIsTheNoiseTraceSum) {
    const auto setup = reactor_setup();
    const auto& cert = setup.certificate;
    auto unc = setup.problem;
    unc.constraints.clear();
    const std::size_t n = setup.problem.dyn.lifted_states();
    const auto ev = controller::evaluate_policy(unc, moments::MomentState{Vector::Zero(n), Matrix::Zero(n, n)},
                                                Policy::constant_gain(10, cert.K));
    // Γ_{i+1} = A_cl Γ_i A_clᵀ + noise, cost = Σ_{i<N} tr(𝐌Γ_i) + tr(PΓ_N).
    Matrix G = Matrix::Zero(n, n);
    double expected = 0.0;
    for (int i = 0; i < 10; ++i) {
        expected += cert.bigM.cwiseProduct(G).sum();
        G = cert.closed_loop * G * cert.closed_loop.transpose() + cert.noise;
    }
    expected += cert.P.cwiseProduct(G).sum();
    EXPECT_NEAR(ev.cost, expected, 1e-12 * expected);
    EXPECT_LE(ev.cost, 10.0 * cert.b);
}

TEST(ValueBound, NoiseFreeLyapunovDecrease) {
    auto cfg = config::load_config(SMPC_SOURCE_DIR "/configs/vandevusse.json");
    cfg.system.Sigma.setZero();
    const auto setup = experiment::build(cfg);
    EXPECT_EQ(setup.certificate.b, 0.0);
    ValueBoundOptions opts;
    opts.samples = 50;
    opts.tolerance = 0.0;
    const auto reports = value_bound_check(setup.problem, setup.certificate, opts);
    EXPECT_LE(reports[0].worst, 1e-12 * opts.radius * opts.radius * setup.certificate.P.norm());
    EXPECT_LE(reports[1].worst, 1e-8);
}

TEST(Boundedness, NoiseFreeValueIsMonotone) {
    Matrix A(2, 2), B(2, 1);
    A << 1.1, 0.3, 0.0, 0.9;
    B << 0.0, 1.0;
    const auto sys = oracle::fixed_system(A, B, Matrix::Zero(2, 2));
    const auto basis = pce::build_basis(sys.theta_dists, 0);
    controller::ChanceConstraint cc{(Vector(2) << 1.0, 0.0).finished(), 5.0, 0.9};
    auto prob = controller::make_problem(sys, basis, 5, weights(Matrix::Identity(2, 2), Matrix::Identity(1, 1)), {cc});
    attach_terminal_ingredients(prob, 0.1);
    const sim::SmpcController ctl(prob);
    const auto run = sim::simulate_closed_loop(sim::plant_at(sys, {0.0}), ctl, (Vector(2) << 2.0, -1.0).finished(), 40, 1);
    ASSERT_FALSE(run.aborted);
    for (std::size_t t = 1; t < run.values.size(); ++t) EXPECT_LE(run.values[t], run.values[t - 1] + 1e-9) << t;
}

TEST(Boundedness, ReactorLoopIsBounded) {
    const auto setup = reactor_setup();
    std::mt19937_64 rng(21);
    const auto plant = sim::sample_plant(setup.config.system, rng);
    const sim::SmpcController ctl(setup.problem);
    const auto run = sim::simulate_closed_loop(plant, ctl, setup.config.simulation.x0_mean, 500, rng());
    ASSERT_FALSE(run.aborted);
    const auto rep = boundedness_trace(run.values);
    EXPECT_FALSE(rep.divergent) << rep.middle_mean << " " << rep.tail_mean;
}

TEST(Boundedness, UnstableOpenLoopIsFlagged) {
    const auto sys = oracle::fixed_system(Matrix::Constant(1, 1, 1.05), Matrix::Ones(1, 1), Matrix::Constant(1, 1, 0.01));
    const sim::LinearFeedbackController zero(Matrix::Zero(1, 1), [](const Vector& x) { return x.squaredNorm(); });
    const auto run = sim::simulate_closed_loop(sim::plant_at(sys, {0.0}), zero, Vector::Ones(1), 500, 3);
    EXPECT_TRUE(boundedness_trace(run.values).divergent);
}

TEST(Boundedness, FlagArithmetic) {
    std::vector<double> flat(100, 1.0);
    EXPECT_FALSE(boundedness_trace(flat).divergent);
    std::vector<double> growing(100);
    for (int t = 0; t < 100; ++t) growing[t] = t * t;
    EXPECT_TRUE(boundedness_trace(growing).divergent);
}

TEST(AssumptionGap, ReportsFiniteSides) {
    const auto setup = reactor_setup();
    const auto plant = sim::sample_plant(setup.config.system, 9);
    const auto gap = assumption_gap(setup.problem, plant.A_hat, plant.B_hat, setup.config.simulation.x0_mean, 50, 4);
    EXPECT_TRUE(std::isfinite(gap.lhs));
    EXPECT_TRUE(std::isfinite(gap.rhs));
    EXPECT_GE(gap.lhs_se, 0.0);
}
