#include "smpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "smpc/kernels.hpp"
#include "smpc/qp.hpp"

namespace smpc::sim {

namespace {

Vector standard_normal(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

bool r_singular(const Matrix& R) {
    if (R.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(R), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
}

}  // namespace

double sample_marginal(const pce::MarginalDistribution& dist, std::mt19937_64& rng) {
    switch (dist.kind()) {
        case pce::DistributionKind::uniform: {
            std::uniform_real_distribution<double> u(dist.lower(), dist.upper());
            return u(rng);
        }
        case pce::DistributionKind::gaussian: {
            std::normal_distribution<double> nd(dist.location(), std::sqrt(dist.gaussian_variance()));
            return nd(rng);
        }
        case pce::DistributionKind::beta4: {
            std::gamma_distribution<double> ga(dist.shape_alpha(), 1.0);
            std::gamma_distribution<double> gb(dist.shape_beta(), 1.0);
            const double x = ga(rng);
            const double y = gb(rng);
            const double s = x / (x + y);
            return dist.lower() + (dist.upper() - dist.lower()) * s;
        }
        case pce::DistributionKind::point: return dist.location();
    }
    return dist.mean();
}

TruePlant plant_at(const galerkin::UncertainLinearSystem& sys, std::vector<double> theta) {
    TruePlant p;
    p.A_hat = sys.A.evaluate(theta);
    p.B_hat = sys.B.evaluate(theta);
    p.F = sys.F;
    p.Sigma = sys.Sigma;
    p.theta_hat = std::move(theta);
    return p;
}

TruePlant sample_plant(const galerkin::UncertainLinearSystem& sys, std::mt19937_64& rng) {
    std::vector<double> theta;
    theta.reserve(sys.theta_dists.size());
    for (const auto& d : sys.theta_dists) theta.push_back(sample_marginal(d, rng));
    return plant_at(sys, std::move(theta));
}

TruePlant sample_plant(const galerkin::UncertainLinearSystem& sys, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_plant(sys, rng);
}

ControlStep SmpcController::step(const Vector& x) const {
    const auto out = controller::mpc_step(problem_, x);
    return {out.u, out.value, out.fallback_used};
}

NominalMpcController::NominalMpcController(const galerkin::UncertainLinearSystem& sys,
                                           const controller::CostWeights& weights,
                                           std::vector<controller::ChanceConstraint> constraints, std::size_t horizon,
                                           NominalOptions options)
    : n_x_(sys.n_x), n_u_(sys.n_u), horizon_(horizon), constraints_(std::move(constraints)),
      options_(std::move(options)) {
    if (horizon_ < 1) throw ParameterError("horizon must be at least 1");
    weights.validate(n_x_, n_u_);
    for (const auto& cc : constraints_) cc.validate(n_x_);
    const auto nx = static_cast<Eigen::Index>(n_x_);
    const auto nu = static_cast<Eigen::Index>(n_u_);
    const Eigen::Index nz = static_cast<Eigen::Index>(horizon_) * nu;
    if (options_.terminal == NominalTerminal::cost &&
        (options_.terminal_weight.rows() != nx || options_.terminal_weight.cols() != nx)) {
        throw DimensionError("nominal terminal weight must be n_x × n_x");
    }

    const Matrix A = sys.mean_A();
    const Matrix B = sys.mean_B();
    free_.push_back(Matrix::Identity(nx, nx));
    forced_.push_back(Matrix::Zero(nx, nz));
    for (std::size_t i = 0; i < horizon_; ++i) {
        free_.push_back(A * free_.back());
        Matrix next = A * forced_.back();
        next.middleCols(static_cast<Eigen::Index>(i) * nu, nu) += B;
        forced_.push_back(std::move(next));
    }

    H_ = Matrix::Zero(nz, nz);
    cross_ = Matrix::Zero(nz, nx);
    constant_ = Matrix::Zero(nx, nx);
    for (std::size_t i = 0; i < horizon_; ++i) {
        H_ += 2.0 * forced_[i].transpose() * weights.Q * forced_[i];
        H_.block(static_cast<Eigen::Index>(i) * nu, static_cast<Eigen::Index>(i) * nu, nu, nu) += 2.0 * weights.R;
        cross_ += 2.0 * forced_[i].transpose() * weights.Q * free_[i];
        constant_ += free_[i].transpose() * weights.Q * free_[i];
    }
    if (options_.terminal == NominalTerminal::cost) {
        const Matrix& S = options_.terminal_weight;
        H_ += 2.0 * forced_[horizon_].transpose() * S * forced_[horizon_];
        cross_ += 2.0 * forced_[horizon_].transpose() * S * free_[horizon_];
        constant_ += free_[horizon_].transpose() * S * free_[horizon_];
    }
    H_ = symmetrized(H_);
    if (r_singular(weights.R) && weights.epsilon > 0.0) H_.diagonal().array() += weights.epsilon;
}

Vector NominalMpcController::plan(const Vector& x, double* value, bool* fallback) const {
    if (x.size() != static_cast<Eigen::Index>(n_x_)) throw DimensionError("state has the wrong dimension");
    const Eigen::Index nz = H_.rows();
    const auto nx = static_cast<Eigen::Index>(n_x_);
    const Eigen::Index stages = static_cast<Eigen::Index>(horizon_) - 1;
    const Eigen::Index m = stages * static_cast<Eigen::Index>(constraints_.size());

    qp::QpProblem prob;
    prob.H = H_;
    prob.f = cross_ * x;
    prob.A_in.resize(m, nz);
    prob.b_in.resize(m);
    Eigen::Index row = 0;
    for (std::size_t i = 1; i < horizon_; ++i) {
        for (const auto& cc : constraints_) {
            prob.A_in.row(row) = cc.c.transpose() * forced_[i];
            prob.b_in(row) = cc.d - cc.c.dot(free_[i] * x);
            ++row;
        }
    }
    if (options_.terminal == NominalTerminal::equality) {
        prob.A_eq = forced_[horizon_];
        prob.b_eq = -free_[horizon_] * x;
    } else {
        prob.A_eq.resize(0, nz);
        prob.b_eq.resize(0);
    }

    auto res = qp::solve_qp(prob);
    bool used_fallback = false;
    Vector z;
    if (res.ok()) {
        z = res.z;
    } else {
        if (!options_.fallback.enabled || m == 0) throw controller::InfeasibleError("nominal MPC program is infeasible", {});
        // Soften the state constraints; the terminal equality stays hard.
        qp::QpProblem soft;
        const Eigen::Index nv = nz + m;
        soft.H = Matrix::Zero(nv, nv);
        soft.H.topLeftCorner(nz, nz) = H_;
        soft.H.bottomRightCorner(m, m).diagonal().setConstant(1e-8 * std::max(1.0, H_.diagonal().maxCoeff()));
        soft.f = Vector::Zero(nv);
        soft.f.head(nz) = prob.f;
        soft.f.tail(m).setConstant(options_.fallback.slack_weight);
        soft.A_in = Matrix::Zero(2 * m, nv);
        soft.b_in = Vector::Zero(2 * m);
        soft.A_in.topLeftCorner(m, nz) = prob.A_in;
        soft.A_in.topRightCorner(m, m) = -Matrix::Identity(m, m);
        soft.b_in.head(m) = prob.b_in;
        soft.A_in.bottomRightCorner(m, m) = -Matrix::Identity(m, m);
        soft.A_eq = Matrix::Zero(prob.A_eq.rows(), nv);
        soft.A_eq.leftCols(nz) = prob.A_eq;
        soft.b_eq = prob.b_eq;
        res = qp::solve_qp(soft);
        if (!res.ok()) throw controller::InfeasibleError("nominal MPC terminal constraint is infeasible", {});
        z = res.z.head(nz);
        used_fallback = true;
    }
    if (value) *value = 0.5 * z.dot(H_ * z) + prob.f.dot(z) + x.dot(constant_ * x);
    if (fallback) *fallback = used_fallback;
    (void)nx;
    return z;
}

ControlStep NominalMpcController::step(const Vector& x) const {
    ControlStep out;
    const Vector z = plan(x, &out.value, &out.fallback_used);
    out.u = z.head(static_cast<Eigen::Index>(n_u_));
    return out;
}

ControlStep LinearFeedbackController::step(const Vector& x) const {
    ControlStep out;
    out.u = K_ * x;
    out.value = value_ ? value_(x) : 0.0;
    return out;
}

bool RunRecord::violated(std::size_t constraint) const {
    for (std::size_t t = 1; t < violations.size(); ++t) {
        if (constraint < violations[t].size() && violations[t][constraint]) return true;
    }
    return false;
}

RunRecord simulate_closed_loop(const TruePlant& plant, const Controller& controller, const Vector& x0,
                               std::size_t steps, std::uint64_t noise_seed,
                               const std::vector<controller::ChanceConstraint>& watch) {
    if (steps < 1) throw ParameterError("closed loop needs at least one step");
    RunRecord rec;
    rec.seed = noise_seed;
    rec.theta_hat = plant.theta_hat;
    rec.states.push_back(x0);
    rec.violations.emplace_back(watch.size(), false);

    std::mt19937_64 rng(noise_seed);
    const Matrix root = psd_sqrt(plant.Sigma);
    Vector x = x0;
    for (std::size_t t = 0; t < steps; ++t) {
        ControlStep step;
        try {
            step = controller.step(x);
        } catch (const Error& e) {
            rec.aborted = true;
            rec.abort_reason = e.what();
            break;
        }
        if (step.fallback_used) ++rec.fallback_count;
        const Vector w = root * standard_normal(root.rows(), rng);
        x = plant.A_hat * x + plant.B_hat * step.u + plant.F * w;
        rec.inputs.push_back(step.u);
        rec.values.push_back(step.value);
        rec.states.push_back(x);
        std::vector<bool> flags(watch.size());
        for (std::size_t l = 0; l < watch.size(); ++l) flags[l] = watch[l].c.dot(x) >= watch[l].d;
        rec.violations.push_back(std::move(flags));
    }
    return rec;
}

MonteCarloSummary monte_carlo(const galerkin::UncertainLinearSystem& sys, const Controller& controller,
                              const MonteCarloOptions& options) {
    if (options.runs < 1) throw ParameterError("monte carlo needs at least one run");
    const auto nx = static_cast<Eigen::Index>(sys.n_x);
    if (options.x0_mean.size() != nx || options.x0_cov.rows() != nx || options.x0_cov.cols() != nx) {
        throw DimensionError("initial-state distribution does not match n_x");
    }
    const Matrix x0_root = psd_sqrt(options.x0_cov);

    std::vector<RunRecord> records(options.runs);
    auto run_one = [&](std::size_t r) {
        const std::uint64_t seed = options.base_seed ^ static_cast<std::uint64_t>(r);
        std::mt19937_64 rng(seed);
        const TruePlant plant = sample_plant(sys, rng);
        const Vector x0 = options.x0_mean + x0_root * standard_normal(nx, rng);
        const std::uint64_t noise_seed = rng();
        records[r] = simulate_closed_loop(plant, controller, x0, options.steps, noise_seed, options.watch);
        records[r].seed = seed;
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, options.runs));
    if (threads == 1) {
        for (std::size_t r = 0; r < options.runs; ++r) run_one(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < threads; ++k) {
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < options.runs; r = next++) run_one(r);
            });
        }
        for (auto& th : pool) th.join();
    }

    MonteCarloSummary sum;
    sum.controller = controller.name();
    sum.runs = options.runs;
    const std::size_t T = options.steps;
    const std::size_t ncc = options.watch.size();
    sum.violation_fraction.assign(ncc, 0.0);
    sum.step_violation_rate.assign(ncc, std::vector<double>(T + 1, 0.0));

    std::vector<const RunRecord*> complete;
    for (const auto& rec : records) {
        if (rec.aborted) ++sum.aborted;
        else complete.push_back(&rec);
        sum.fallback_steps += rec.fallback_count;
        sum.total_steps += rec.inputs.size();
        for (std::size_t l = 0; l < ncc; ++l) {
            if (rec.violated(l)) sum.violation_fraction[l] += 1.0;
            for (std::size_t t = 1; t < rec.violations.size(); ++t) {
                if (rec.violations[t][l]) sum.step_violation_rate[l][t] += 1.0;
            }
        }
    }
    const double runs = static_cast<double>(options.runs);
    for (std::size_t l = 0; l < ncc; ++l) {
        sum.violation_fraction[l] /= runs;
        for (auto& v : sum.step_violation_rate[l]) v /= runs;
    }
    sum.fallback_frequency =
        sum.total_steps > 0 ? static_cast<double>(sum.fallback_steps) / static_cast<double>(sum.total_steps) : 0.0;

    const double nc = static_cast<double>(complete.size());
    for (std::size_t t = 0; t <= T; ++t) {
        Vector mean = Vector::Zero(nx);
        for (const auto* rec : complete) mean += rec->states[t];
        if (nc > 0) mean /= nc;
        Vector var = Vector::Zero(nx);
        for (const auto* rec : complete) var += (rec->states[t] - mean).cwiseAbs2();
        if (nc > 1) var /= (nc - 1.0);
        sum.mean.push_back(mean);
        sum.variance.push_back(var);
    }

    const std::size_t bins = std::max<std::size_t>(1, options.histogram_bins);
    for (std::size_t t : options.histogram_times) {
        if (t > T) continue;
        for (Eigen::Index s = 0; s < nx; ++s) {
            Histogram h;
            h.time = t;
            h.state = static_cast<std::size_t>(s);
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto* rec : complete) {
                lo = std::min(lo, rec->states[t](s));
                hi = std::max(hi, rec->states[t](s));
            }
            if (complete.empty()) lo = hi = 0.0;
            if (hi - lo < 1e-12) {
                lo -= 0.5;
                hi += 0.5;
            }
            for (std::size_t k = 0; k <= bins; ++k) {
                h.edges.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins));
            }
            h.counts.assign(bins, 0);
            for (const auto* rec : complete) {
                const double v = rec->states[t](s);
                auto k = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
                h.counts[std::min(k, bins - 1)] += 1;
            }
            sum.histograms.push_back(std::move(h));
        }
    }
    if (options.keep_records) sum.records = std::move(records);
    return sum;
}

namespace {

// Values of a polynomial at every sample; powers[d][e] holds θ_d^e.
void evaluate_polynomial(const galerkin::Polynomial& poly, const std::vector<std::vector<std::vector<double>>>& powers,
                         std::vector<double>& out, std::vector<double>& scratch, std::vector<double>& scratch2) {
    const std::size_t S = out.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& mono : poly.terms()) {
        std::fill(scratch.begin(), scratch.end(), 1.0);
        for (std::size_t d = 0; d < mono.exponents.size(); ++d) {
            const int e = mono.exponents[d];
            if (e == 0) continue;
            std::fill(scratch2.begin(), scratch2.end(), 0.0);
            kernels::fma_elementwise(scratch, powers[d][static_cast<std::size_t>(e)], scratch2);
            scratch.swap(scratch2);
        }
        kernels::axpy(mono.coefficient, std::span<const double>(scratch.data(), S), out);
    }
}

int max_exponent(const galerkin::PolynomialMatrix& m, std::size_t d) {
    int e = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            for (const auto& mono : m(r, c).terms()) e = std::max(e, mono.exponents[d]);
        }
    }
    return e;
}

// Mean, variance and standard errors of one SoA column.
void column_stats(const std::vector<double>& x, double& mean, double& var, double& mean_se, double& var_se,
                  std::vector<double>& dev, std::vector<double>& sq) {
    const auto S = static_cast<double>(x.size());
    mean = kernels::sum(x) / S;
    std::copy(x.begin(), x.end(), dev.begin());
    for (auto& v : dev) v -= mean;
    const double m2 = kernels::dot(dev, dev) / S;
    std::fill(sq.begin(), sq.end(), 0.0);
    kernels::fma_elementwise(dev, dev, sq);
    const double m4 = kernels::dot(sq, sq) / S;
    var = m2 * S / (S - 1.0);
    mean_se = std::sqrt(var / S);
    var_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / S);
}

}  // namespace

EnsembleMoments simulate_ensemble(const galerkin::UncertainLinearSystem& sys, const EnsembleOptions& options) {
    const std::size_t S = options.samples;
    if (S < 2) throw ParameterError("ensemble needs at least two samples");
    const std::size_t nx = sys.n_x;
    const std::size_t nu = sys.n_u;
    const std::size_t nw = sys.n_w;
    const std::size_t dim = sys.theta_dists.size();
    if (static_cast<std::size_t>(options.x0.size()) != nx) throw DimensionError("x0 has the wrong dimension");
    if (options.policy.horizon() < options.stages) throw DimensionError("policy shorter than the requested stages");
    const bool with_cost = options.Q.size() != 0;

    std::mt19937_64 rng(options.seed);

    // Parameters and their powers.
    std::vector<std::vector<double>> theta(dim, std::vector<double>(S));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t d = 0; d < dim; ++d) theta[d][s] = sample_marginal(sys.theta_dists[d], rng);
    }
    std::vector<std::vector<std::vector<double>>> powers(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        const int emax = std::max(max_exponent(sys.A, d), max_exponent(sys.B, d));
        powers[d].assign(static_cast<std::size_t>(emax) + 1, std::vector<double>(S, 0.0));
        std::fill(powers[d][0].begin(), powers[d][0].end(), 1.0);
        for (int e = 1; e <= emax; ++e) {
            kernels::fma_elementwise(powers[d][static_cast<std::size_t>(e) - 1], theta[d],
                                     powers[d][static_cast<std::size_t>(e)]);
        }
    }
    std::vector<double> scratch(S), scratch2(S);
    std::vector<std::vector<double>> A(nx * nx, std::vector<double>(S)), B(nx * nu, std::vector<double>(S));
    for (std::size_t r = 0; r < nx; ++r) {
        for (std::size_t c = 0; c < nx; ++c) evaluate_polynomial(sys.A(r, c), powers, A[r * nx + c], scratch, scratch2);
        for (std::size_t c = 0; c < nu; ++c) evaluate_polynomial(sys.B(r, c), powers, B[r * nu + c], scratch, scratch2);
    }

    std::vector<std::vector<double>> x(nx, std::vector<double>(S)), next(nx, std::vector<double>(S));
    std::vector<std::vector<double>> u(nu, std::vector<double>(S)), w(nw, std::vector<double>(S));
    for (std::size_t r = 0; r < nx; ++r) std::fill(x[r].begin(), x[r].end(), options.x0(static_cast<Eigen::Index>(r)));
    std::vector<double> cost(S, 0.0), weighted(S);
    const Matrix root = psd_sqrt(sys.Sigma);
    std::normal_distribution<double> nd(0.0, 1.0);

    EnsembleMoments out;
    std::vector<double> dev(S), sq(S);
    auto record = [&] {
        Vector mean(nx), var(nx), mse(nx), vse(nx);
        for (std::size_t r = 0; r < nx; ++r) {
            const auto i = static_cast<Eigen::Index>(r);
            column_stats(x[r], mean(i), var(i), mse(i), vse(i), dev, sq);
        }
        out.mean.push_back(mean);
        out.variance.push_back(var);
        out.mean_se.push_back(mse);
        out.variance_se.push_back(vse);
    };
    record();

    std::vector<double> z(nw);
    for (std::size_t i = 0; i < options.stages; ++i) {
        const Matrix& L = options.policy.gains[i];
        const Vector& g = options.policy.offsets[i];
        for (std::size_t k = 0; k < nu; ++k) {
            std::fill(u[k].begin(), u[k].end(), g(static_cast<Eigen::Index>(k)));
            for (std::size_t c = 0; c < nx; ++c) {
                kernels::axpy(L(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)), x[c], u[k]);
            }
        }
        if (with_cost) {
            for (std::size_t r = 0; r < nx; ++r) {
                std::fill(weighted.begin(), weighted.end(), 0.0);
                for (std::size_t c = 0; c < nx; ++c) {
                    kernels::axpy(options.Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), x[c], weighted);
                }
                kernels::fma_elementwise(x[r], weighted, cost);
            }
            for (std::size_t r = 0; r < nu; ++r) {
                std::fill(weighted.begin(), weighted.end(), 0.0);
                for (std::size_t c = 0; c < nu; ++c) {
                    kernels::axpy(options.R(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), u[c], weighted);
                }
                kernels::fma_elementwise(u[r], weighted, cost);
            }
        }
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t l = 0; l < nw; ++l) z[l] = nd(rng);
            for (std::size_t l = 0; l < nw; ++l) {
                double acc = 0.0;
                for (std::size_t m = 0; m < nw; ++m) {
                    acc += root(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) * z[m];
                }
                w[l][s] = acc;
            }
        }
        for (std::size_t r = 0; r < nx; ++r) {
            std::fill(next[r].begin(), next[r].end(), 0.0);
            for (std::size_t c = 0; c < nx; ++c) kernels::fma_elementwise(A[r * nx + c], x[c], next[r]);
            for (std::size_t c = 0; c < nu; ++c) kernels::fma_elementwise(B[r * nu + c], u[c], next[r]);
            for (std::size_t l = 0; l < nw; ++l) {
                kernels::axpy(sys.F(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)), w[l], next[r]);
            }
        }
        x.swap(next);
        record();
    }
    if (with_cost) {
        double m = 0, v = 0, mse = 0, vse = 0;
        column_stats(cost, m, v, mse, vse, dev, sq);
        out.stage_cost_mean = m;
        out.stage_cost_se = mse;
    }
    return out;
}

}  // namespace smpc::sim
