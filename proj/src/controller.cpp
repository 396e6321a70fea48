#include "smpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "smpc/qp.hpp"

namespace smpc::controller {

namespace {

bool symmetric_psd(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    if (m.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12 * scale;
}

bool singular(const Matrix& m) {
    if (m.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
}

// Diagonal of W as a vector.
Vector norm_vector(const pce::PolyBasis& basis) {
    return Eigen::Map<const Vector>(basis.norms().data(), static_cast<Eigen::Index>(basis.size()));
}

}  // namespace

void ChanceConstraint::validate(std::size_t n_x) const {
    if (static_cast<std::size_t>(c.size()) != n_x) {
        throw DimensionError("chance constraint vector has length " + std::to_string(c.size()) + ", expected " +
                             std::to_string(n_x));
    }
    if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("chance constraint beta must lie in (0, 1)");
    if (c.cwiseAbs().maxCoeff() == 0.0) throw ParameterError("chance constraint vector is zero");
    if (!std::isfinite(d) || !c.allFinite()) throw ParameterError("chance constraint has non-finite entries");
}

void CostWeights::validate(std::size_t n_x, std::size_t n_u) const {
    if (static_cast<std::size_t>(Q.rows()) != n_x || static_cast<std::size_t>(Q.cols()) != n_x) {
        throw DimensionError("Q must be n_x × n_x");
    }
    if (static_cast<std::size_t>(R.rows()) != n_u || static_cast<std::size_t>(R.cols()) != n_u) {
        throw DimensionError("R must be n_u × n_u");
    }
    if (!symmetric_psd(Q)) throw ParameterError("Q must be symmetric positive semidefinite");
    if (!symmetric_psd(R)) throw ParameterError("R must be symmetric positive semidefinite");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be nonnegative");
    if (terminal == TerminalMode::explicit_matrix && !symmetric_psd(terminal_matrix)) {
        throw ParameterError("explicit terminal matrix must be symmetric positive semidefinite");
    }
}

Matrix SmpcProblem::lifted_Q() const { return kron(weights.Q, basis().norm_matrix()); }
Matrix SmpcProblem::lifted_R() const { return kron(weights.R, basis().norm_matrix()); }

void SmpcProblem::validate() const {
    if (horizon < 1) throw ParameterError("horizon must be at least 1");
    if (!dyn.basis) throw ParameterError("problem has no basis");
    weights.validate(system.n_x, system.n_u);
    for (const auto& cc : constraints) cc.validate(system.n_x);
    if (gain.size() != 0 &&
        (static_cast<std::size_t>(gain.rows()) != system.n_u || static_cast<std::size_t>(gain.cols()) != system.n_x)) {
        throw DimensionError("gain must be n_u × n_x");
    }
    const auto n = static_cast<Eigen::Index>(dyn.lifted_states());
    if (terminal.size() != 0 && (terminal.rows() != n || terminal.cols() != n)) {
        throw DimensionError("terminal weight must be n × n in coefficient space");
    }
    if (!(fallback.slack_weight > 0.0)) throw ParameterError("slack weight must be positive");
    if (joint.max_iterations < 0 || !(joint.tolerance >= 0.0) || !(joint.penalty > 0.0)) {
        throw ParameterError("invalid joint solver options");
    }
}

SmpcProblem make_problem(galerkin::UncertainLinearSystem system, const pce::PolyBasis& basis, std::size_t horizon,
                         CostWeights weights, std::vector<ChanceConstraint> constraints, SolverMode mode) {
    system.validate();
    SmpcProblem prob;
    prob.dyn = galerkin::project_system(system, basis);
    prob.system = std::move(system);
    prob.horizon = horizon;
    prob.weights = std::move(weights);
    prob.constraints = std::move(constraints);
    prob.mode = mode;
    prob.gain = Matrix::Zero(static_cast<Eigen::Index>(prob.system.n_u), static_cast<Eigen::Index>(prob.system.n_x));
    if (prob.weights.terminal == TerminalMode::explicit_matrix) prob.terminal = prob.weights.terminal_matrix;
    prob.validate();
    return prob;
}

double kappa(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
    return std::sqrt(beta / (1.0 - beta));
}

double chance_constraint_value(const ChanceConstraint& cc, const moments::MomentState& ms,
                               const pce::PolyBasis& basis) {
    const Vector mean = moments::state_mean(ms, basis);
    const Matrix var = moments::state_variance(ms, basis);
    if (cc.c.size() != mean.size()) throw DimensionError("chance constraint does not match the state dimension");
    const double spread = std::max(0.0, cc.c.dot(var * cc.c));
    return cc.c.dot(mean) + kappa(cc.beta) * std::sqrt(spread) - cc.d;
}

LiftedWeights lifted_weights(const SmpcProblem& prob) { return {prob.lifted_Q(), prob.lifted_R(), prob.terminal}; }

double cost(const moments::MomentTrajectory& traj, const galerkin::LiftedPolicy& lifted, const LiftedWeights& weights) {
    if (traj.empty() || traj.size() != lifted.horizon() + 1) {
        throw DimensionError("trajectory length must be policy horizon + 1");
    }
    const Eigen::Index n = traj.front().mean.size();
    if (weights.Q.rows() != n || weights.Q.cols() != n) throw DimensionError("lifted Q does not match the trajectory");
    if (weights.S.size() != 0 && (weights.S.rows() != n || weights.S.cols() != n)) {
        throw DimensionError("terminal weight does not match the trajectory");
    }

    double total = 0.0;
    for (std::size_t i = 0; i < lifted.horizon(); ++i) {
        const auto& ms = traj[i];
        const Matrix& L = lifted.bigL[i];
        const Vector& g = lifted.bigg[i];
        if (L.rows() != weights.R.rows() || L.cols() != n || g.size() != weights.R.rows()) {
            throw DimensionError("lifted policy does not match the weights");
        }
        const Vector Lphi = L * ms.mean;
        const Matrix LtRL = L.transpose() * weights.R * L;
        total += ms.mean.dot(weights.Q * ms.mean) + (weights.Q + LtRL).cwiseProduct(ms.cov).sum();
        total += g.dot(weights.R * g) + 2.0 * g.dot(weights.R * Lphi) + Lphi.dot(weights.R * Lphi);
    }
    if (weights.S.size() != 0) {
        const auto& last = traj.back();
        total += last.mean.dot(weights.S * last.mean) + weights.S.cwiseProduct(last.cov).sum();
    }
    return total;
}

PolicyEvaluation evaluate_policy(const SmpcProblem& prob, const moments::MomentState& init, const Policy& policy) {
    PolicyEvaluation out;
    const auto lifted = galerkin::lift_policy(policy, prob.dyn.terms());
    out.trajectory = moments::propagate(prob.dyn, lifted, init, prob.horizon);
    out.cost = cost(out.trajectory, lifted, lifted_weights(prob));
    for (std::size_t i = 1; i < prob.horizon; ++i) {
        for (const auto& cc : prob.constraints) {
            const double v = chance_constraint_value(cc, out.trajectory[i], prob.basis());
            out.constraint_values.push_back(v);
            out.max_constraint = std::max(out.max_constraint, v);
        }
    }
    return out;
}

double GainConditionedProgram::surrogate(const Surrogate& s, const Vector& z) const {
    const Vector h = s.spread_map * z + s.spread_constant;
    return s.mean_row.dot(z) + s.mean_constant + s.kappa * std::sqrt(h.squaredNorm() + s.noise_variance) - s.d;
}

Vector GainConditionedProgram::surrogate_gradient(const Surrogate& s, const Vector& z) const {
    Vector grad = s.mean_row;
    const Vector h = s.spread_map * z + s.spread_constant;
    const double sigma = std::sqrt(h.squaredNorm() + s.noise_variance);
    if (sigma > 0.0) grad += (s.kappa / sigma) * (s.spread_map.transpose() * h);
    return grad;
}

GainConditionedProgram condition_on_gains(const SmpcProblem& prob, const moments::MomentState& init,
                                          const std::vector<Matrix>& gains) {
    const std::size_t N = prob.horizon;
    if (gains.size() != N) throw DimensionError("gain sequence length must equal the horizon");
    const auto& dyn = prob.dyn;
    const auto p1 = static_cast<Eigen::Index>(dyn.terms());
    const auto n = static_cast<Eigen::Index>(dyn.lifted_states());
    const auto nu = static_cast<Eigen::Index>(dyn.n_u);
    const auto nx = static_cast<Eigen::Index>(dyn.n_x);
    const Eigen::Index nz = static_cast<Eigen::Index>(N) * nu;
    if (init.mean.size() != n || init.cov.rows() != n || init.cov.cols() != n) {
        throw DimensionError("initial moment state does not match the lifted dimension");
    }

    const Matrix Q = prob.lifted_Q();
    const Matrix R = prob.lifted_R();
    const Matrix E = galerkin::constant_embedding(dyn.n_u, dyn.terms());
    const Matrix BE = dyn.bigB * E;
    const Matrix noise = dyn.bigF * dyn.Sigma * dyn.bigF.transpose();
    const Matrix I = Matrix::Identity(p1, p1);

    GainConditionedProgram prog;
    prog.H = Matrix::Zero(nz, nz);
    prog.f = Vector::Zero(nz);
    prog.mean_offset.push_back(init.mean);
    prog.mean_map.push_back(Matrix::Zero(n, nz));
    prog.cov.push_back(init.cov);

    for (std::size_t i = 0; i < N; ++i) {
        if (gains[i].rows() != nu || gains[i].cols() != nx) throw DimensionError("gain must be n_u × n_x");
        const Matrix L = kron(gains[i], I);
        const Vector& o = prog.mean_offset[i];
        const Matrix& M = prog.mean_map[i];
        const Matrix& G = prog.cov[i];

        Matrix D = L * M;
        D.middleCols(static_cast<Eigen::Index>(i) * nu, nu) += E;
        const Vector Lo = L * o;
        prog.H += 2.0 * (M.transpose() * Q * M + D.transpose() * R * D);
        prog.f += 2.0 * (M.transpose() * (Q * o) + D.transpose() * (R * Lo));
        prog.constant += o.dot(Q * o) + Lo.dot(R * Lo) + (Q + L.transpose() * R * L).cwiseProduct(G).sum();

        const Matrix closed = dyn.bigA + dyn.bigB * L;
        Matrix next_map = closed * M;
        next_map.middleCols(static_cast<Eigen::Index>(i) * nu, nu) += BE;
        prog.mean_offset.push_back(closed * o);
        prog.mean_map.push_back(std::move(next_map));
        prog.cov.push_back(symmetrized(closed * G * closed.transpose() + noise));
    }
    if (prob.terminal.size() != 0) {
        const Matrix& S = prob.terminal;
        const Vector& o = prog.mean_offset[N];
        const Matrix& M = prog.mean_map[N];
        prog.H += 2.0 * M.transpose() * S * M;
        prog.f += 2.0 * M.transpose() * (S * o);
        prog.constant += o.dot(S * o) + S.cwiseProduct(prog.cov[N]).sum();
    }
    prog.H = symmetrized(prog.H);

    const Vector w = norm_vector(prob.basis());
    const bool extra_row = w(0) > 1.0;
    for (std::size_t i = 1; i < N; ++i) {
        const Vector& o = prog.mean_offset[i];
        const Matrix& M = prog.mean_map[i];
        const Matrix& G = prog.cov[i];
        for (std::size_t l = 0; l < prob.constraints.size(); ++l) {
            const auto& cc = prob.constraints[l];
            Vector a = Vector::Zero(n);
            Matrix spread = Matrix::Zero(p1 - 1 + (extra_row ? 1 : 0), n);
            for (Eigen::Index r = 0; r < nx; ++r) {
                a(r * p1) = cc.c(r);
                for (Eigen::Index k = 1; k < p1; ++k) spread(k - 1, r * p1 + k) = std::sqrt(w(k)) * cc.c(r);
                if (extra_row) spread(p1 - 1, r * p1) = std::sqrt(w(0) - 1.0) * cc.c(r);
            }
            double noise_var = 0.0;
            for (Eigen::Index r = 0; r < nx; ++r) {
                for (Eigen::Index c = 0; c < nx; ++c) {
                    noise_var += cc.c(r) * cc.c(c) * G.block(r * p1, c * p1, p1, p1).diagonal().dot(w);
                }
            }
            GainConditionedProgram::Surrogate s;
            s.stage = i;
            s.index = l;
            s.mean_row = M.transpose() * a;
            s.mean_constant = a.dot(o);
            s.spread_map = spread * M;
            s.spread_constant = spread * o;
            s.noise_variance = std::max(0.0, noise_var);
            s.kappa = kappa(cc.beta);
            s.d = cc.d;
            prog.surrogates.push_back(std::move(s));
        }
    }
    return prog;
}

namespace {

constexpr double kFeasibilityTarget = 1e-11;
constexpr int kMaxCuttingRounds = 200;

struct CutResult {
    bool feasible = false;
    Vector z;
    Vector multipliers;  // aggregated per surrogate
    int rounds = 0;
    double worst = 0.0;
};

// Outer approximation of the cone constraints by tangent planes. With slack,
// variables are (z, s) and every surrogate l reads f_l(z) ≤ s_l, s ≥ 0.
CutResult cutting_planes(const GainConditionedProgram& prog, const Matrix& H, bool with_slack, double slack_weight) {
    const auto nz = static_cast<Eigen::Index>(prog.variables());
    const auto ns = with_slack ? static_cast<Eigen::Index>(prog.surrogates.size()) : 0;
    const Eigen::Index nv = nz + ns;

    qp::QpProblem qp;
    qp.H = Matrix::Zero(nv, nv);
    qp.H.topLeftCorner(nz, nz) = H;
    qp.f = Vector::Zero(nv);
    qp.f.head(nz) = prog.f;
    if (ns > 0) {
        const double ridge = 1e-8 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        qp.H.bottomRightCorner(ns, ns).diagonal().setConstant(ridge);
        qp.f.tail(ns).setConstant(slack_weight);
    }
    std::vector<Vector> rows;
    std::vector<double> rhs;
    std::vector<Eigen::Index> owner;
    for (Eigen::Index s = 0; s < ns; ++s) {
        Vector row = Vector::Zero(nv);
        row(nz + s) = -1.0;
        rows.push_back(std::move(row));
        rhs.push_back(0.0);
        owner.push_back(-1);
    }

    CutResult out;
    Vector v = Vector::Zero(nv);
    for (int round = 0; round <= kMaxCuttingRounds; ++round) {
        qp.A_in.resize(static_cast<Eigen::Index>(rows.size()), nv);
        qp.b_in.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t j = 0; j < rows.size(); ++j) {
            qp.A_in.row(static_cast<Eigen::Index>(j)) = rows[j].transpose();
            qp.b_in(static_cast<Eigen::Index>(j)) = rhs[j];
        }
        qp.A_eq.resize(0, nv);
        qp.b_eq.resize(0);
        const auto res = qp::solve_qp(qp);
        out.rounds = round + 1;
        if (res.status == qp::QpStatus::infeasible) {
            out.feasible = false;
            return out;
        }
        if (res.status != qp::QpStatus::optimal) throw Error("QP iteration limit reached in cutting-plane loop");
        v = res.z;

        const Vector z = v.head(nz);
        double worst = -std::numeric_limits<double>::infinity();
        std::vector<std::pair<std::size_t, double>> to_cut;
        for (std::size_t l = 0; l < prog.surrogates.size(); ++l) {
            double val = prog.surrogate(prog.surrogates[l], z);
            if (ns > 0) val -= v(nz + static_cast<Eigen::Index>(l));
            worst = std::max(worst, val);
            if (val > -1e-7) to_cut.emplace_back(l, val);
        }
        out.worst = worst;
        out.z = z;
        out.multipliers = Vector::Zero(static_cast<Eigen::Index>(prog.surrogates.size()));
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (owner[j] >= 0) out.multipliers(owner[j]) += res.lambda(static_cast<Eigen::Index>(j));
        }
        if (worst <= kFeasibilityTarget) {
            // Re-anchor cuts at z so the final multipliers refer to tangent planes at the solution.
            bool tangent = true;
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (owner[j] < 0 || res.lambda(static_cast<Eigen::Index>(j)) <= 0.0) continue;
                const auto& s = prog.surrogates[static_cast<std::size_t>(owner[j])];
                const Vector g = prog.surrogate_gradient(s, z);
                if ((rows[j].head(nz) - g).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, g.cwiseAbs().maxCoeff())) {
                    tangent = false;
                }
            }
            if (tangent || round == kMaxCuttingRounds) {
                out.feasible = true;
                return out;
            }
        }
        for (const auto& [l, val] : to_cut) {
            const auto& s = prog.surrogates[l];
            const double value = prog.surrogate(s, z);
            const Vector g = prog.surrogate_gradient(s, z);
            Vector row = Vector::Zero(nv);
            row.head(nz) = g;
            if (ns > 0) row(nz + static_cast<Eigen::Index>(l)) = -1.0;
            rows.push_back(std::move(row));
            rhs.push_back(g.dot(z) - value);
            owner.push_back(static_cast<Eigen::Index>(l));
        }
    }
    out.feasible = true;
    return out;
}

InfeasibilityReport most_violated(const SmpcProblem& prob, const GainConditionedProgram& prog, const Vector& z) {
    InfeasibilityReport rep;
    rep.violation = -std::numeric_limits<double>::infinity();
    for (const auto& s : prog.surrogates) {
        const double v = prog.surrogate(s, z);
        if (v > rep.violation) {
            rep.violation = v;
            rep.stage = s.stage;
            rep.constraint = s.index;
        }
    }
    (void)prob;
    return rep;
}

Policy policy_from(const std::vector<Matrix>& gains, const Vector& z, std::size_t n_u) {
    Policy p;
    p.gains = gains;
    const auto nu = static_cast<Eigen::Index>(n_u);
    for (std::size_t i = 0; i < gains.size(); ++i) p.offsets.push_back(z.segment(static_cast<Eigen::Index>(i) * nu, nu));
    return p;
}

std::vector<Matrix> repeated_gain(const SmpcProblem& prob) {
    Matrix K = prob.gain;
    if (K.size() == 0) K = Matrix::Zero(static_cast<Eigen::Index>(prob.system.n_u), static_cast<Eigen::Index>(prob.system.n_x));
    return std::vector<Matrix>(prob.horizon, K);
}

}  // namespace

SolveResult solve_with_gains(const SmpcProblem& prob, const moments::MomentState& init,
                             const std::vector<Matrix>& gains) {
    const auto prog = condition_on_gains(prob, init, gains);
    Matrix H = prog.H;
    if (singular(prob.weights.R) && prob.weights.epsilon > 0.0) {
        H.diagonal().array() += prob.weights.epsilon;
    }

    SolveResult result;
    CutResult cut = cutting_planes(prog, H, false, 0.0);
    if (!cut.feasible) {
        CutResult soft = cutting_planes(prog, H, true, prob.fallback.slack_weight);
        const auto report = most_violated(prob, prog, soft.z);
        if (!prob.fallback.enabled) {
            throw InfeasibleError("tightened chance constraints are infeasible (stage " + std::to_string(report.stage) +
                                      ", constraint " + std::to_string(report.constraint) + ")",
                                  report);
        }
        result.fallback_used = true;
        result.infeasibility = report;
        cut = std::move(soft);
        cut.rounds += 1;
    }

    const Vector& z = cut.z;
    Vector stationarity = H * z + prog.f;
    double worst = prog.surrogates.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < prog.surrogates.size(); ++l) {
        const auto& s = prog.surrogates[l];
        worst = std::max(worst, prog.surrogate(s, z));
        const double mu = cut.multipliers.size() > 0 ? cut.multipliers(static_cast<Eigen::Index>(l)) : 0.0;
        if (mu != 0.0) stationarity += mu * prog.surrogate_gradient(s, z);
    }

    result.policy = policy_from(gains, z, prob.system.n_u);
    result.cost = prog.value(z);
    result.iterations = cut.rounds;
    result.max_constraint = worst;
    result.kkt_stationarity = result.fallback_used ? 0.0 : stationarity.cwiseAbs().maxCoeff();
    return result;
}

SolveResult solve_fixed_gain(const SmpcProblem& prob, const moments::MomentState& init) {
    return solve_with_gains(prob, init, repeated_gain(prob));
}

SolveResult solve_fixed_gain(const SmpcProblem& prob, const Vector& x) {
    return solve_fixed_gain(prob, moments::MomentState::observed(x, prob.dyn.terms()));
}

namespace {

double penalized(const SmpcProblem& prob, const moments::MomentState& init, const Policy& policy) {
    const auto ev = evaluate_policy(prob, init, policy);
    double pen = 0.0;
    for (double v : ev.constraint_values) pen += std::pow(std::max(0.0, v), 2);
    return ev.cost + prob.joint.penalty * pen;
}

}  // namespace

SolveResult solve_joint(const SmpcProblem& prob, const moments::MomentState& init) {
    SolveResult best = solve_fixed_gain(prob, init);
    if (best.fallback_used) return best;

    // Outer objective: optimal offsets for the given gains, with residual
    // surrogate violations penalized when the tightened set is empty.
    SmpcProblem inner = prob;
    inner.fallback.enabled = true;
    auto reduced = [&](const std::vector<Matrix>& gains, SolveResult* out = nullptr) {
        SolveResult r = solve_with_gains(inner, init, gains);
        const double v = penalized(prob, init, r.policy);
        if (out) *out = std::move(r);
        return v;
    };

    std::vector<Matrix> current = best.policy.gains;
    double base = reduced(current);
    double scale = 0.1 * std::max(1.0, prob.gain.size() ? prob.gain.norm() : 1.0);
    int it = 0;
    bool converged = false;
    for (; it < prob.joint.max_iterations; ++it) {
        // Central differences over every gain entry.
        std::vector<Matrix> grad(prob.horizon);
        double grad_sq = 0.0;
        for (std::size_t i = 0; i < prob.horizon; ++i) {
            grad[i] = Matrix::Zero(current[i].rows(), current[i].cols());
            for (Eigen::Index r = 0; r < grad[i].rows(); ++r) {
                for (Eigen::Index c = 0; c < grad[i].cols(); ++c) {
                    const double h = 1e-5 * std::max(1.0, std::abs(current[i](r, c)));
                    auto probe = current;
                    probe[i](r, c) += h;
                    const double up = reduced(probe);
                    probe[i](r, c) -= 2.0 * h;
                    const double down = reduced(probe);
                    grad[i](r, c) = (up - down) / (2.0 * h);
                    grad_sq += grad[i](r, c) * grad[i](r, c);
                }
            }
        }
        const double grad_norm = std::sqrt(grad_sq);
        if (!(grad_norm > 1e-14)) {
            converged = true;
            break;
        }

        double alpha = scale / grad_norm;
        auto trial = current;
        SolveResult cand;
        double value = base;
        bool armijo = false;
        for (int k = 0; k < 40; ++k) {
            for (std::size_t i = 0; i < prob.horizon; ++i) trial[i] = current[i] - alpha * grad[i];
            value = reduced(trial, &cand);
            if (value <= base - 1e-4 * alpha * grad_sq) {
                armijo = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!armijo) {
            converged = true;
            break;
        }

        if (!cand.fallback_used && cand.max_constraint <= 1e-8 && cand.cost < best.cost) best = std::move(cand);
        const double decrease = base - value;
        current = std::move(trial);
        base = value;
        scale = 2.0 * alpha * grad_norm;
        if (decrease < prob.joint.tolerance) {
            converged = true;
            ++it;
            break;
        }
    }
    best.iterations = it;
    best.converged = converged;
    return best;
}

SolveResult solve_joint(const SmpcProblem& prob, const Vector& x) {
    return solve_joint(prob, moments::MomentState::observed(x, prob.dyn.terms()));
}

SolveResult solve(const SmpcProblem& prob, const moments::MomentState& init) {
    return prob.mode == SolverMode::joint ? solve_joint(prob, init) : solve_fixed_gain(prob, init);
}

StepOutcome mpc_step(const SmpcProblem& prob, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != prob.system.n_x) throw DimensionError("state has the wrong dimension");
    StepOutcome out;
    out.solution = solve(prob, moments::MomentState::observed(x, prob.dyn.terms()));
    out.u = out.solution.policy.offsets.front() + out.solution.policy.gains.front() * x;
    out.value = out.solution.cost;
    out.fallback_used = out.solution.fallback_used;
    return out;
}

}  // namespace smpc::controller
