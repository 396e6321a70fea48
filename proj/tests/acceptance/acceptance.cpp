// One line per acceptance criterion; exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "smpc/experiment.hpp"
#include "smpc/moments.hpp"
#include "smpc/pce.hpp"
#include "smpc/qp.hpp"

using namespace smpc;
namespace fs = std::filesystem;

namespace {

const char* kBundled = SMPC_SOURCE_DIR "/configs/vandevusse.json";
int failures = 0;

void report(int id, bool ok, const std::string& detail, double seconds) {
    std::printf("[%s] criterion %d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, detail.c_str(), seconds);
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

template <class F>
void criterion(int id, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    report(id, ok, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Vector kX0 = (Vector(2) << 0.5, 0.1).finished();

}  // namespace

int main() {
    const auto setup = experiment::build(config::load_config(kBundled));
    std::optional<experiment::StudyResult> study;
    double study_seconds = 0.0;
    {
        const auto start = std::chrono::steady_clock::now();
        study = experiment::run_study(setup);
        study_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    const auto& smpc = study->smpc;
    const auto& nominal = *study->nominal;

    criterion(1, [&](std::string& d) {
        const double sat = 1.0 - smpc.violation_fraction[0];
        d = format("SMPC satisfaction %.2f over %zu runs (aborted %zu), study took %.1fs", sat, smpc.runs, smpc.aborted,
                   study_seconds);
        return sat >= 0.95 && smpc.aborted == 0;
    });

    criterion(2, [&](std::string& d) {
        const double v = nominal.violation_fraction[0];
        d = format("nominal violation fraction %.2f, target [0.30, 0.60]", v);
        return v >= 0.30 && v <= 0.60;
    });

    criterion(3, [&](std::string& d) {
        bool ok = true;
        for (std::size_t t : setup.config.simulation.histogram_times) {
            const double ms = std::abs(smpc.mean[t](0)), mn = std::abs(nominal.mean[t](0));
            const double vs = smpc.variance[t](0), vn = nominal.variance[t](0);
            d += format("t=%zu |mean| %.3g vs %.3g, var %.3g vs %.3g; ", t, ms, mn, vs, vn);
            ok = ok && ms <= mn && vs <= vn;
        }
        return ok;
    });

    criterion(4, [&](std::string& d) {
        const auto& dyn = setup.problem.dyn;
        const auto& basis = *dyn.basis;
        const std::size_t N = 10, P = basis.size();
        const Policy zero = Policy::zero(N, 1, 2);
        const auto traj =
            moments::propagate(dyn, galerkin::lift_policy(zero, P), moments::MomentState::observed(kX0, P), N);
        const auto mc = oracle::brute_force(setup.config.system, kX0, zero, N, 100000, 2024);
        double worst_se = 0.0, worst_rel = 0.0;
        for (std::size_t i = 1; i <= N; ++i) {
            const Vector mean = moments::state_mean(traj[i], basis);
            const Vector var = moments::state_variance(traj[i], basis).diagonal();
            for (Eigen::Index r = 0; r < 2; ++r) {
                worst_se = std::max(worst_se, std::abs(mean(r) - mc.mean[i](r)) / mc.mean_se[i](r));
                worst_rel = std::max(worst_rel, std::abs(var(r) - mc.variance[i](r)) / var(r));
            }
        }
        d = format("worst mean gap %.2f SE, worst variance gap %.3f%%", worst_se, 100.0 * worst_rel);
        return worst_se <= 3.0 && worst_rel <= 0.02;
    });

    criterion(5, [&](std::string& d) {
        const auto& basis = *setup.problem.dyn.basis;
        Matrix G = Matrix::Zero(basis.size(), basis.size());
        for (const auto& q : basis.tensor_grid()) {
            const Vector phi = basis.evaluate(q.theta);
            G += q.weight * phi * phi.transpose();
        }
        double off = 0.0;
        for (Eigen::Index i = 0; i < G.rows(); ++i) {
            for (Eigen::Index j = 0; j < G.cols(); ++j) {
                if (i != j) off = std::max(off, std::abs(G(i, j)) / std::sqrt(G(i, i) * G(j, j)));
            }
        }
        const auto t = pce::triple_products(basis);
        const bool psi0 = t.psi(0) == Matrix::Identity(basis.size(), basis.size());
        double sym = 0.0;
        const auto& n = basis.norms();
        for (std::size_t i = 0; i < basis.size(); ++i) {
            for (std::size_t j = 0; j < basis.size(); ++j) {
                for (std::size_t k = 0; k < basis.size(); ++k) {
                    const double e = t.sigma(i, j, k) * n[i];
                    sym = std::max({sym, std::abs(e - t.sigma(i, k, j) * n[i]), std::abs(e - t.sigma(j, i, k) * n[j]),
                                    std::abs(e - t.sigma(k, j, i) * n[k])});
                }
            }
        }
        const auto leg = pce::triple_products(pce::build_basis({pce::MarginalDistribution::uniform(-1, 1)}, 2));
        const double s112 = leg.sigma(1, 1, 2);
        d = format("orthogonality %.2g, psi0 identity %s, symmetry %.2g, Legendre sigma_112 %.15g", off,
                   psi0 ? "yes" : "no", sym, s112);
        return off <= 1e-10 && psi0 && sym <= 1e-10 && std::abs(s112 - oracle::frozen::legendre_sigma_112) <= 1e-10;
    });

    criterion(6, [&](std::string& d) {
        const auto& prob = setup.problem;
        const std::size_t P = prob.dyn.basis->size();
        const Policy solved = controller::solve_fixed_gain(prob, kX0).policy;
        double worst = 0.0;
        int idx = 0;
        for (const Policy& p : {Policy::zero(prob.horizon, 1, 2), solved}) {
            const auto ev = controller::evaluate_policy(prob, moments::MomentState::observed(kX0, P), p);
            const auto mc =
                oracle::brute_force(prob.system, kX0, p, prob.horizon, 100000, 31 + idx, prob.weights.Q, prob.weights.R);
            const auto [term, term_se] = oracle::terminal_term(prob.system, kX0, p, prob.horizon, prob.terminal,
                                                               setup.config.max_degree, 100000, 41 + idx);
            const double sampled = mc.stage_cost + term;
            const double rel = std::abs(ev.cost - sampled) / sampled;
            d += format("policy %d cost %.6g vs sampled %.6g (%.3f%%); ", idx, ev.cost, sampled, 100.0 * rel);
            worst = std::max(worst, rel);
            ++idx;
        }
        return worst <= 0.01;
    });

    criterion(7, [&](std::string& d) {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> nd;
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        double gap = 0.0, kkt = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 2 + trial % 6, m = 3 + trial % 7;
            const Matrix M = Matrix::NullaryExpr(n, n, [&] { return nd(rng); });
            qp::QpProblem p;
            p.H = M.transpose() * M + 0.1 * Matrix::Identity(n, n);
            p.f = Vector::NullaryExpr(n, [&] { return 3.0 * nd(rng); });
            p.A_in = Matrix::NullaryExpr(m, n, [&] { return nd(rng); });
            const Vector z0 = Vector::NullaryExpr(n, [&] { return nd(rng); });
            p.b_in = p.A_in * z0 + Vector::NullaryExpr(m, [&] { return ud(rng); });
            p.A_eq = Matrix(0, n);
            p.b_eq = Vector(0);
            const auto r = qp::solve_qp(p);
            const auto ref = oracle::enumerate_active_sets(p.H, p.f, p.A_in, p.b_in);
            if (!r.ok() || !ref.feasible) {
                d = format("instance %d unsolved", trial);
                return false;
            }
            gap = std::max(gap, std::abs(r.objective - ref.objective) / (1.0 + std::abs(ref.objective)));
            kkt = std::max(kkt, qp::kkt_residuals(p, r.z, r.lambda, r.nu).worst());
        }
        d = format("100 instances, worst optimum gap %.2g, worst KKT residual %.2g", gap, kkt);
        return gap <= 1e-7 && kkt <= 1e-8;
    });

    criterion(8, [&](std::string& d) {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t draws = 1000000;
        double worst = std::numeric_limits<double>::infinity();
        bool ok = true;
        for (int trial = 0; trial < 20; ++trial) {
            const double mean = -5.0 + 10.0 * u(rng);
            const double var = 1e-4 + 4.0 * u(rng);
            const double beta = 0.05 + 0.94 * u(rng);
            const controller::ChanceConstraint cc{Vector::Ones(1), mean + controller::kappa(beta) * std::sqrt(var), beta};
            std::normal_distribution<double> nd(mean, std::sqrt(var));
            std::size_t held = 0;
            for (std::size_t s = 0; s < draws; ++s) held += nd(rng) <= cc.d;
            const double rate = static_cast<double>(held) / draws;
            const double margin = (rate - beta) / std::sqrt(beta * (1.0 - beta) / draws);
            worst = std::min(worst, margin);
            ok = ok && margin >= -3.0;
        }
        d = format("20 triples, smallest (rate - beta)/SE %.1f", worst);
        return ok;
    });

    criterion(9, [&](std::string& d) {
        const auto& cert = setup.certificate;
        bool ok = true;
        const auto lyap = stability::lyapunov_check(cert);
        d += format("Lyapunov residual %.2g; ", lyap.worst);
        ok = ok && lyap.passed && lyap.worst <= 1e-9;
        stability::DriftOptions drift;
        drift.exterior_samples = 10000;
        for (const auto& r : stability::drift_check(cert, drift)) {
            d += format("%s %s worst %.2g; ", r.name.c_str(), r.passed ? "ok" : "violated", r.worst);
            ok = ok && r.passed;
        }
        stability::ValueBoundOptions vb;
        vb.samples = 1000;
        for (const auto& r : stability::value_bound_check(setup.problem, cert, vb)) {
            d += format("%s %s worst %.2g; ", r.name.c_str(), r.passed ? "ok" : "violated", r.worst);
            ok = ok && r.passed;
        }
        const double P = stability::solve_lyapunov(Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1), 0.1)(0, 0);
        d += format("scalar P %.15g", P);
        return ok && std::abs(P - oracle::frozen::scalar_lyapunov_P) <= 1e-12;
    });

    criterion(10, [&](std::string& d) {
        std::mt19937_64 rng(21);
        const auto plant = sim::sample_plant(setup.config.system, rng);
        const sim::SmpcController ctl(setup.problem);
        const auto run = sim::simulate_closed_loop(plant, ctl, setup.config.simulation.x0_mean, 500, rng());
        const auto rep = stability::boundedness_trace(run.values);

        const auto unstable = oracle::fixed_system(Matrix::Constant(1, 1, 1.05), Matrix::Ones(1, 1),
                                                   Matrix::Constant(1, 1, 0.01));
        const sim::LinearFeedbackController zero(Matrix::Zero(1, 1), [](const Vector& x) { return x.squaredNorm(); });
        const auto bad = sim::simulate_closed_loop(sim::plant_at(unstable, std::vector<double>{0.0}), zero,
                                                   Vector::Ones(1), 500, 3);
        const auto neg = stability::boundedness_trace(bad.values);
        d = format("reactor T=500 middle %.3g tail %.3g %s; negative control %s", rep.middle_mean, rep.tail_mean,
                   rep.divergent ? "divergent" : "bounded", neg.divergent ? "flagged" : "not flagged");
        return !run.aborted && !rep.divergent && neg.divergent;
    });

    criterion(11, [&](std::string& d) {
        const auto base = fs::temp_directory_path() / "smpc_acceptance";
        fs::remove_all(base);
        experiment::write_study(base / "a", setup, *study);
        const auto again = experiment::run_study(experiment::build(config::load_config(kBundled)));
        experiment::write_study(base / "b", setup, again);
        std::size_t files = 0, differing = 0;
        for (const auto& entry : fs::directory_iterator(base / "a")) {
            ++files;
            if (slurp(entry.path()) != slurp(base / "b" / entry.path().filename())) ++differing;
        }
        fs::remove_all(base);
        d = format("%zu output files, %zu differ", files, differing);
        return files > 0 && differing == 0;
    });

    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
