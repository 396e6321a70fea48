#include "smpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace smpc::qp {

QpProblem QpProblem::unconstrained(Matrix H, Vector f) {
    const Eigen::Index n = f.size();
    return {std::move(H), std::move(f), Matrix(0, n), Vector(0), Matrix(0, n), Vector(0)};
}

double KktResiduals::worst() const {
    return std::max({stationarity, primal_inequality, primal_equality, dual_feasibility, complementarity});
}

KktResiduals kkt_residuals(const QpProblem& p, const Vector& z, const Vector& lambda, const Vector& nu) {
    KktResiduals r;
    Vector grad = p.H * z + p.f;
    if (p.A_in.rows() > 0) grad += p.A_in.transpose() * lambda;
    if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * nu;
    r.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    if (p.A_in.rows() > 0) {
        const Vector slack = p.A_in * z - p.b_in;
        r.primal_inequality = std::max(0.0, slack.maxCoeff());
        r.dual_feasibility = std::max(0.0, -lambda.minCoeff());
        r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    if (p.A_eq.rows() > 0) r.primal_equality = (p.A_eq * z - p.b_eq).cwiseAbs().maxCoeff();
    return r;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraint j in the solver's internal form n_jᵀz ≥ c_j. Equalities keep
// their own sign and never leave the active set.
struct Row {
    Vector normal;
    double rhs;
    bool equality;
    int source;  // index into A_in or A_eq
};

class DualActiveSet {
public:
    DualActiveSet(const QpProblem& p, const QpOptions& opt) : p_(p), opt_(opt) {
        n_ = p.f.size();
        chol_.compute(p.H);
        if (chol_.info() != Eigen::Success) throw ConditioningError("QP Hessian is not positive definite");
        const Vector diag = chol_.matrixL().toDenseMatrix().diagonal();
        const double lo = diag.cwiseAbs().minCoeff();
        const double hi = diag.cwiseAbs().maxCoeff();
        if (!(lo > 0.0) || lo * lo < 1e-15 * hi * hi) {
            throw ConditioningError("QP Hessian is numerically singular (condition estimate " +
                                    std::to_string(hi * hi / std::max(lo * lo, 1e-300)) + ")");
        }
        for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) {
            rows_.push_back({p.A_eq.row(i).transpose(), p.b_eq(i), true, static_cast<int>(i)});
        }
        for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) {
            rows_.push_back({-p.A_in.row(i).transpose(), -p.b_in(i), false, static_cast<int>(i)});
        }
    }

    QpResult run() {
        QpResult result;
        z_ = -chol_.solve(p_.f);
        const int limit = opt_.max_iterations > 0
                              ? opt_.max_iterations
                              : 50 * static_cast<int>(n_ + static_cast<Eigen::Index>(rows_.size())) + 100;
        int iterations = 0;

        // Equalities are added with unrestricted step sign.
        for (std::size_t j = 0; j < rows_.size(); ++j) {
            if (!rows_[j].equality) continue;
            Vector dir;
            Vector r;
            directions(rows_[j].normal, dir, r);
            const double resid = rows_[j].normal.dot(z_) - rows_[j].rhs;
            if (dir.norm() <= 1e-13 * (1.0 + rows_[j].normal.norm())) {
                if (std::abs(resid) > tolerance(j)) return infeasible(result, j, r, iterations);
                continue;  // dependent and consistent
            }
            const double t = -resid / dir.dot(rows_[j].normal);
            z_ += t * dir;
            for (std::size_t a = 0; a < active_.size(); ++a) u_[a] -= t * r(static_cast<Eigen::Index>(a));
            active_.push_back(j);
            u_.push_back(t);
            ++iterations;
        }

        while (true) {
            if (iterations >= limit) {
                finish(result, QpStatus::iteration_limit, iterations);
                return result;
            }
            // Most violated inactive inequality.
            std::size_t p = rows_.size();
            double worst = 0.0;
            for (std::size_t j = 0; j < rows_.size(); ++j) {
                if (rows_[j].equality || is_active(j)) continue;
                const double s = (rows_[j].normal.dot(z_) - rows_[j].rhs) / (1.0 + std::abs(rows_[j].rhs));
                if (s < worst && -s > opt_.feasibility_tol) {
                    worst = s;
                    p = j;
                }
            }
            if (p == rows_.size()) {
                finish(result, QpStatus::optimal, iterations);
                return result;
            }

            double u_plus = 0.0;
            while (true) {
                if (++iterations >= limit) {
                    finish(result, QpStatus::iteration_limit, iterations);
                    return result;
                }
                Vector dir;
                Vector r;
                directions(rows_[p].normal, dir, r);

                double t1 = kInf;
                std::size_t drop = active_.size();
                for (std::size_t a = 0; a < active_.size(); ++a) {
                    if (rows_[active_[a]].equality) continue;
                    const double ra = r(static_cast<Eigen::Index>(a));
                    if (ra > 1e-14 && u_[a] / ra < t1) {
                        t1 = u_[a] / ra;
                        drop = a;
                    }
                }
                const double slack = rows_[p].normal.dot(z_) - rows_[p].rhs;
                double t2 = kInf;
                const double curvature = dir.dot(rows_[p].normal);
                if (dir.norm() > 1e-13 * (1.0 + rows_[p].normal.norm()) && curvature > 0.0) {
                    t2 = -slack / curvature;
                }
                const double t = std::min(t1, t2);
                if (t == kInf) return infeasible(result, p, r, iterations);

                if (t2 == kInf) {
                    for (std::size_t a = 0; a < active_.size(); ++a) u_[a] -= t * r(static_cast<Eigen::Index>(a));
                    u_plus += t;
                    remove(drop);
                    continue;
                }
                z_ += t * dir;
                for (std::size_t a = 0; a < active_.size(); ++a) u_[a] -= t * r(static_cast<Eigen::Index>(a));
                u_plus += t;
                if (t == t2) {
                    active_.push_back(p);
                    u_.push_back(u_plus);
                    break;
                }
                remove(drop);
            }
        }
    }

private:
    double tolerance(std::size_t j) const { return 1e-10 * (1.0 + std::abs(rows_[j].rhs)); }

    bool is_active(std::size_t j) const { return std::find(active_.begin(), active_.end(), j) != active_.end(); }

    void remove(std::size_t a) {
        active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(a));
        u_.erase(u_.begin() + static_cast<std::ptrdiff_t>(a));
    }

    // Primal direction dir (in the null space of active normals, H-metric) and
    // dual direction r with normal = N r + H dir.
    void directions(const Vector& normal, Vector& dir, Vector& r) const {
        const auto k = static_cast<Eigen::Index>(active_.size());
        const auto L = chol_.matrixL();
        Vector v = L.solve(normal);
        if (k == 0) {
            dir = chol_.matrixU().solve(v);
            r = Vector(0);
            return;
        }
        Matrix Y(n_, k);
        for (Eigen::Index a = 0; a < k; ++a) Y.col(a) = L.solve(rows_[active_[static_cast<std::size_t>(a)]].normal);
        Eigen::HouseholderQR<Matrix> qr(Y);
        const Matrix Q = qr.householderQ();
        const Vector d = Q.transpose() * v;
        const Matrix R = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
        r = R.triangularView<Eigen::Upper>().solve(d.head(k));
        if (k >= n_) {
            dir = Vector::Zero(n_);
        } else {
            dir = chol_.matrixU().solve(Q.rightCols(n_ - k) * d.tail(n_ - k));
        }
    }

    QpResult& infeasible(QpResult& result, std::size_t p, const Vector& r, int iterations) {
        result.status = QpStatus::infeasible;
        result.iterations = iterations;
        result.z = z_;
        InfeasibilityCertificate cert;
        cert.violated_row = rows_[p].source;
        cert.y = Vector::Zero(p_.A_in.rows());
        cert.nu = Vector::Zero(p_.A_eq.rows());
        if (rows_[p].equality) {
            cert.violated_row = -1;
        } else {
            cert.y(rows_[p].source) = 1.0;
        }
        // n_p = Σ r_a n_a over the active set, r_a ≤ 0 on inequalities.
        for (std::size_t a = 0; a < active_.size() && static_cast<Eigen::Index>(a) < r.size(); ++a) {
            const Row& row = rows_[active_[a]];
            const double ra = r(static_cast<Eigen::Index>(a));
            if (row.equality) {
                cert.nu(row.source) = ra;
            } else {
                cert.y(row.source) = std::max(0.0, -ra);
            }
        }
        cert.gap = (p_.b_in.size() > 0 ? p_.b_in.dot(cert.y) : 0.0) + (p_.b_eq.size() > 0 ? p_.b_eq.dot(cert.nu) : 0.0);
        result.certificate = cert;
        result.lambda = Vector::Zero(p_.A_in.rows());
        result.nu = Vector::Zero(p_.A_eq.rows());
        result.objective = 0.5 * z_.dot(p_.H * z_) + p_.f.dot(z_);
        return result;
    }

    void finish(QpResult& result, QpStatus status, int iterations) {
        result.status = status;
        result.iterations = iterations;
        Vector lambda = Vector::Zero(p_.A_in.rows());
        Vector nu = Vector::Zero(p_.A_eq.rows());
        for (std::size_t a = 0; a < active_.size(); ++a) {
            const Row& row = rows_[active_[a]];
            if (row.equality) {
                nu(row.source) = -u_[a];
            } else {
                lambda(row.source) = u_[a];
            }
        }
        result.z = z_;
        result.lambda = lambda;
        result.nu = nu;
        result.residuals = kkt_residuals(p_, z_, lambda, nu);
        if (status == QpStatus::optimal) polish(result);
        for (std::size_t a = 0; a < active_.size(); ++a) {
            if (!rows_[active_[a]].equality) result.active_inequalities.push_back(rows_[active_[a]].source);
        }
        std::sort(result.active_inequalities.begin(), result.active_inequalities.end());
        result.objective = 0.5 * result.z.dot(p_.H * result.z) + p_.f.dot(result.z);
    }

    // Re-solve the equality-constrained KKT system on the final active set and
    // keep the result when it lowers the worst residual.
    void polish(QpResult& result) const {
        const auto k = static_cast<Eigen::Index>(active_.size());
        if (k == 0) return;
        Matrix K = Matrix::Zero(n_ + k, n_ + k);
        Vector rhs = Vector::Zero(n_ + k);
        K.topLeftCorner(n_, n_) = p_.H;
        rhs.head(n_) = -p_.f;
        for (Eigen::Index a = 0; a < k; ++a) {
            const Row& row = rows_[active_[static_cast<std::size_t>(a)]];
            K.block(0, n_ + a, n_, 1) = -row.normal;
            K.block(n_ + a, 0, 1, n_) = -row.normal.transpose();
            rhs(n_ + a) = -row.rhs;
        }
        const Vector sol = K.fullPivLu().solve(rhs);
        if (!sol.allFinite()) return;
        Vector lambda = Vector::Zero(p_.A_in.rows());
        Vector nu = Vector::Zero(p_.A_eq.rows());
        for (Eigen::Index a = 0; a < k; ++a) {
            const Row& row = rows_[active_[static_cast<std::size_t>(a)]];
            if (row.equality) {
                nu(row.source) = -sol(n_ + a);
            } else {
                lambda(row.source) = sol(n_ + a);
            }
        }
        const Vector z = sol.head(n_);
        const KktResiduals res = kkt_residuals(p_, z, lambda, nu);
        if (res.worst() < result.residuals.worst()) {
            result.z = z;
            result.lambda = lambda;
            result.nu = nu;
            result.residuals = res;
        }
    }

    const QpProblem& p_;
    QpOptions opt_;
    Eigen::Index n_ = 0;
    Eigen::LLT<Matrix> chol_;
    std::vector<Row> rows_;
    std::vector<std::size_t> active_;
    std::vector<double> u_;
    Vector z_;
};

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpOptions& options) {
    const Eigen::Index n = problem.f.size();
    if (problem.H.rows() != n || problem.H.cols() != n) throw DimensionError("QP Hessian shape does not match f");
    if (problem.A_in.rows() != problem.b_in.size() || (problem.A_in.rows() > 0 && problem.A_in.cols() != n)) {
        throw DimensionError("QP inequality block shape mismatch");
    }
    if (problem.A_eq.rows() != problem.b_eq.size() || (problem.A_eq.rows() > 0 && problem.A_eq.cols() != n)) {
        throw DimensionError("QP equality block shape mismatch");
    }
    if (n == 0) {
        QpResult r;
        r.status = QpStatus::optimal;
        r.z = Vector(0);
        r.lambda = Vector::Zero(problem.A_in.rows());
        r.nu = Vector::Zero(problem.A_eq.rows());
        return r;
    }
    DualActiveSet solver(problem, options);
    return solver.run();
}

}  // namespace smpc::qp
