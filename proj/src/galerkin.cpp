#include "smpc/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

namespace smpc {

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

double spectral_radius(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> solver(a, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix psd_sqrt(const Matrix& m) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    const Vector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

Policy Policy::constant_gain(std::size_t horizon, const Matrix& gain) {
    Policy p;
    p.gains.assign(horizon, gain);
    p.offsets.assign(horizon, Vector::Zero(gain.rows()));
    return p;
}

Policy Policy::zero(std::size_t horizon, std::size_t n_u, std::size_t n_x) {
    return constant_gain(horizon, Matrix::Zero(static_cast<Eigen::Index>(n_u), static_cast<Eigen::Index>(n_x)));
}

}  // namespace smpc

namespace smpc::galerkin {

Polynomial Polynomial::constant(double value, std::size_t dimension) {
    if (value == 0.0) return Polynomial{};
    return Polynomial{{Monomial{pce::MultiIndex(dimension, 0), value}}};
}

double Polynomial::evaluate(std::span<const double> theta) const {
    double v = 0.0;
    for (const auto& term : terms_) {
        if (term.exponents.size() != theta.size()) {
            throw DimensionError("polynomial monomial has " + std::to_string(term.exponents.size()) +
                                 " exponents but theta has " + std::to_string(theta.size()) + " entries");
        }
        double mono = term.coefficient;
        for (std::size_t d = 0; d < theta.size(); ++d) mono *= std::pow(theta[d], term.exponents[d]);
        v += mono;
    }
    return v;
}

int Polynomial::total_degree() const {
    int degree = 0;
    for (const auto& term : terms_) {
        if (term.coefficient == 0.0) continue;
        degree = std::max(degree, std::accumulate(term.exponents.begin(), term.exponents.end(), 0));
    }
    return degree;
}

PolynomialMatrix PolynomialMatrix::constant(const Matrix& value, std::size_t dimension) {
    PolynomialMatrix out(static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols()));
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = Polynomial::constant(value(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), dimension);
        }
    }
    return out;
}

Matrix PolynomialMatrix::evaluate(std::span<const double> theta) const {
    Matrix out(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*this)(r, c).evaluate(theta);
        }
    }
    return out;
}

int PolynomialMatrix::total_degree() const {
    int degree = 0;
    for (const auto& e : entries_) degree = std::max(degree, e.total_degree());
    return degree;
}

void UncertainLinearSystem::validate() const {
    if (n_x == 0 || n_u == 0 || n_w == 0) throw DimensionError("system dimensions n_x, n_u, n_w must be positive");
    if (A.rows() != n_x || A.cols() != n_x) throw DimensionError("A must be n_x × n_x");
    if (B.rows() != n_x || B.cols() != n_u) throw DimensionError("B must be n_x × n_u");
    if (static_cast<std::size_t>(F.rows()) != n_x || static_cast<std::size_t>(F.cols()) != n_w) {
        throw DimensionError("F must be n_x × n_w");
    }
    if (static_cast<std::size_t>(Sigma.rows()) != n_w || static_cast<std::size_t>(Sigma.cols()) != n_w) {
        throw DimensionError("Sigma must be n_w × n_w");
    }
    if (theta_dists.empty()) throw DimensionError("at least one parameter distribution is required");
    if ((Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Sigma.cwiseAbs().maxCoeff())) {
        throw ParameterError("Sigma must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(Sigma), Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, Sigma.norm())) {
        throw ParameterError("Sigma must be positive semidefinite");
    }
    const std::size_t dim = theta_dists.size();
    auto check_poly = [&](const PolynomialMatrix& m, const char* name) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.cols(); ++c) {
                for (const auto& t : m(r, c).terms()) {
                    if (t.exponents.size() != dim) {
                        throw DimensionError(std::string(name) + " entry has a multi-index of the wrong length");
                    }
                    if (std::any_of(t.exponents.begin(), t.exponents.end(), [](int e) { return e < 0; })) {
                        throw ParameterError(std::string(name) + " entry has a negative exponent");
                    }
                }
            }
        }
    };
    check_poly(A, "A");
    check_poly(B, "B");
}

namespace {

std::vector<double> parameter_means(const std::vector<pce::MarginalDistribution>& dists) {
    std::vector<double> m;
    m.reserve(dists.size());
    for (const auto& d : dists) m.push_back(d.mean());
    return m;
}

// Degree in the non-degenerate parameters; point masses contribute constants.
int effective_degree(const PolynomialMatrix& poly, const std::vector<pce::MarginalDistribution>& dists) {
    int degree = 0;
    for (std::size_t r = 0; r < poly.rows(); ++r) {
        for (std::size_t c = 0; c < poly.cols(); ++c) {
            for (const auto& term : poly(r, c).terms()) {
                if (term.coefficient == 0.0) continue;
                int d = 0;
                for (std::size_t j = 0; j < term.exponents.size() && j < dists.size(); ++j) {
                    if (dists[j].kind() != pce::DistributionKind::point) d += term.exponents[j];
                }
                degree = std::max(degree, d);
            }
        }
    }
    return degree;
}

std::vector<Matrix> project_matrix(const PolynomialMatrix& poly, const pce::PolyBasis& basis) {
    const auto grid = basis.tensor_grid();
    std::vector<Vector> phi;
    phi.reserve(grid.size());
    for (const auto& node : grid) phi.push_back(basis.evaluate_standard(node.standard));

    const auto rows = static_cast<Eigen::Index>(poly.rows());
    const auto cols = static_cast<Eigen::Index>(poly.cols());
    std::vector<Matrix> out(basis.size(), Matrix::Zero(rows, cols));
    for (std::size_t q = 0; q < grid.size(); ++q) {
        const Matrix value = poly.evaluate(grid[q].theta);
        for (std::size_t k = 0; k < basis.size(); ++k) {
            out[k] += (grid[q].weight * phi[q](static_cast<Eigen::Index>(k))) * value;
        }
    }
    for (std::size_t k = 0; k < basis.size(); ++k) out[k] /= basis.norms()[k];
    // Constant entries live in the zeroth coefficient only.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& entry = poly(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            if (!entry.is_constant()) continue;
            const std::vector<double> origin(basis.dimension(), 0.0);
            for (auto& m : out) m(r, c) = 0.0;
            out[0](r, c) = entry.evaluate(origin);
        }
    }
    return out;
}

}  // namespace

Matrix UncertainLinearSystem::mean_A() const { return A.evaluate(parameter_means(theta_dists)); }
Matrix UncertainLinearSystem::mean_B() const { return B.evaluate(parameter_means(theta_dists)); }

GpcDynamics project_system(const UncertainLinearSystem& sys, const pce::PolyBasis& basis) {
    sys.validate();
    if (sys.theta_dists.size() != basis.dimension()) {
        throw DimensionError("basis dimension does not match the number of uncertain parameters");
    }
    const int degree = std::max(effective_degree(sys.A, sys.theta_dists), effective_degree(sys.B, sys.theta_dists));
    if (degree > basis.max_degree()) {
        throw ProjectionError("system entry degree " + std::to_string(degree) +
                              " exceeds basis degree " + std::to_string(basis.max_degree()) +
                              "; Galerkin projection would not be exact");
    }

    GpcDynamics dyn;
    dyn.basis = std::make_shared<const pce::PolyBasis>(basis);
    dyn.triples = std::make_shared<const pce::TripleProductTensor>(pce::triple_products(basis));
    dyn.n_x = sys.n_x;
    dyn.n_u = sys.n_u;
    dyn.n_w = sys.n_w;
    dyn.Sigma = sys.Sigma;
    dyn.A_k = project_matrix(sys.A, basis);
    dyn.B_k = project_matrix(sys.B, basis);

    const std::size_t terms = basis.size();
    const auto n = static_cast<Eigen::Index>(dyn.lifted_states());
    const auto r = static_cast<Eigen::Index>(dyn.lifted_inputs());
    dyn.bigA = Matrix::Zero(n, n);
    dyn.bigB = Matrix::Zero(n, r);
    for (std::size_t k = 0; k < terms; ++k) {
        const Matrix& psi = dyn.triples->psi(k);
        if (!dyn.A_k[k].isZero(0.0)) dyn.bigA += kron(dyn.A_k[k], psi);
        if (!dyn.B_k[k].isZero(0.0)) dyn.bigB += kron(dyn.B_k[k], psi);
    }
    dyn.bigF = kron(sys.F, constant_embedding(1, terms));
    return dyn;
}

Matrix constant_embedding(std::size_t a, std::size_t terms) {
    Matrix e = Matrix::Zero(static_cast<Eigen::Index>(terms), 1);
    e(0, 0) = 1.0;
    return kron(Matrix::Identity(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)), e);
}

Vector lift_state(const Vector& x, std::size_t terms) {
    Vector out = Vector::Zero(x.size() * static_cast<Eigen::Index>(terms));
    for (Eigen::Index r = 0; r < x.size(); ++r) out(r * static_cast<Eigen::Index>(terms)) = x(r);
    return out;
}

LiftedPolicy lift_policy(const Policy& policy, std::size_t terms) {
    if (policy.gains.size() != policy.offsets.size()) {
        throw DimensionError("policy gains and offsets have different horizons");
    }
    const auto p1 = static_cast<Eigen::Index>(terms);
    const Matrix identity = Matrix::Identity(p1, p1);
    LiftedPolicy lifted;
    lifted.bigL.reserve(policy.horizon());
    lifted.bigg.reserve(policy.horizon());
    for (std::size_t i = 0; i < policy.horizon(); ++i) {
        if (policy.offsets[i].size() != policy.gains[i].rows()) {
            throw DimensionError("policy stage " + std::to_string(i) + ": offset length does not match gain rows");
        }
        lifted.bigL.push_back(kron(policy.gains[i], identity));
        lifted.bigg.push_back(lift_state(policy.offsets[i], terms));
    }
    return lifted;
}

}  // namespace smpc::galerkin
