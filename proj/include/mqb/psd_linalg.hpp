#pragma once

// Dense symmetric / PSD matrix utilities. Supported regime is d <= 64.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace mqb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Square symmetric matrix. Symmetrized as (M + M^T)/2 on construction.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(const Matrix& m) {
        if (m.rows() != m.cols())
            throw InvalidInput("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()));
        m_ = 0.5 * (m + m.transpose());
    }

    static SymMatrix identity(Eigen::Index d) { return SymMatrix(Matrix::Identity(d, d)); }
    static SymMatrix zero(Eigen::Index d) { return SymMatrix(Matrix::Zero(d, d)); }

    Eigen::Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

protected:
    Matrix m_;
};

inline double op_norm(const SymMatrix& m);

/// Symmetric positive semidefinite matrix.
///
/// Eigenvalues down to -1e-10 * (1 + ||m||_op) are treated as rounding dust and
/// clipped to zero; anything more negative is rejected with InvalidInput.
class PsdMatrix : public SymMatrix {
public:
    PsdMatrix() = default;

    explicit PsdMatrix(const Matrix& m) : SymMatrix(m) {
        if (dim() == 0) return;
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_);
        if (es.info() != Eigen::Success) throw NumericError("PsdMatrix: eigendecomposition failed");
        const Vector& ev = es.eigenvalues();
        const double norm = ev.cwiseAbs().maxCoeff();
        const double floor = -1e-10 * (1.0 + norm);
        if (ev.minCoeff() < floor)
            throw InvalidInput("PsdMatrix: minimum eigenvalue " + std::to_string(ev.minCoeff()) +
                               " is below tolerance " + std::to_string(floor));
        if (ev.minCoeff() < 0.0) {
            const Vector clipped = ev.cwiseMax(0.0);
            m_ = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
            m_ = 0.5 * (m_ + m_.transpose());
        }
    }

    /// Wraps a matrix already known to be PSD (e.g. a Cholesky inverse). Only symmetrizes.
    static PsdMatrix trusted(const Matrix& m) {
        PsdMatrix p;
        p.m_ = 0.5 * (m + m.transpose());
        return p;
    }

    static PsdMatrix identity(Eigen::Index d) { return trusted(Matrix::Identity(d, d)); }
    static PsdMatrix zero(Eigen::Index d) { return trusted(Matrix::Zero(d, d)); }
    static PsdMatrix scaled_identity(Eigen::Index d, double s) {
        return PsdMatrix(s * Matrix::Identity(d, d));
    }
};

struct EigExtrema {
    double min_eig;
    double max_eig;
};

inline EigExtrema eig_extrema(const SymMatrix& m) {
    if (m.dim() == 0) throw InvalidInput("eig_extrema: empty matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("eig_extrema: eigensolver did not converge");
    return {es.eigenvalues()(0), es.eigenvalues()(m.dim() - 1)};
}

inline double min_eig(const SymMatrix& m) { return eig_extrema(m).min_eig; }
inline double max_eig(const SymMatrix& m) { return eig_extrema(m).max_eig; }

/// l2 operator norm = largest absolute eigenvalue.
inline double op_norm(const SymMatrix& m) {
    if (m.dim() == 0) return 0.0;
    const auto [lo, hi] = eig_extrema(m);
    return std::max(std::abs(lo), std::abs(hi));
}

/// Largest singular value of a general (possibly rectangular) matrix.
inline double op_norm(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return m.size() == 0 ? 0.0 : svd.singularValues()(0);
}

namespace detail {

// Applies f to the eigenvalues of a PSD matrix (negative dust clipped to 0 first).
template <class F>
Matrix spectral_apply(const Matrix& m, F f) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition did not converge");
    Vector ev = es.eigenvalues().cwiseMax(0.0);
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = f(ev(i));
    Matrix r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (r + r.transpose());
}

}  // namespace detail

/// The unique symmetric PSD square root.
inline PsdMatrix psd_sqrt(const PsdMatrix& m) {
    return PsdMatrix::trusted(detail::spectral_apply(m.matrix(), [](double x) { return std::sqrt(x); }));
}

/// Symmetric inverse square root of a PD matrix.
inline PsdMatrix pd_inv_sqrt(const PsdMatrix& m) {
    const double scale = op_norm(m);
    return PsdMatrix::trusted(detail::spectral_apply(m.matrix(), [scale](double x) {
        if (x <= 1e-300 + 1e-15 * scale) throw SingularMatrixError("pd_inv_sqrt: matrix is singular");
        return 1.0 / std::sqrt(x);
    }));
}

/// Cholesky-based inverse of m + jitter*I.
inline PsdMatrix pd_inverse(const PsdMatrix& m, double jitter = 0.0) {
    const Eigen::Index d = m.dim();
    Matrix shifted = m.matrix();
    if (jitter != 0.0) shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("pd_inverse: Cholesky factorization failed");
    Matrix inv = llt.solve(Matrix::Identity(d, d));
    if (!inv.allFinite()) throw SingularMatrixError("pd_inverse: non-finite inverse");
    return PsdMatrix::trusted(inv);
}

/// pd_inverse with one retry at jitter 1e-10 * ||m||_op.
inline PsdMatrix pd_inverse_with_retry(const PsdMatrix& m) {
    try {
        return pd_inverse(m);
    } catch (const SingularMatrixError&) {
        return pd_inverse(m, 1e-10 * std::max(op_norm(m), 1e-300));
    }
}

/// mean + L z with L L^T = cov and z standard normal. Cholesky when cov is PD,
/// symmetric root otherwise (covers singular covariances, including 0).
inline Vector sample_gaussian(const Vector& mean, const PsdMatrix& cov, RngStream& rng) {
    const Eigen::Index d = mean.size();
    if (cov.dim() != d)
        throw InvalidInput("sample_gaussian: mean has dim " + std::to_string(d) + ", cov has dim " +
                           std::to_string(cov.dim()));
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
    Eigen::LLT<Matrix> llt(cov.matrix());
    if (llt.info() == Eigen::Success) return mean + llt.matrixL() * z;
    return mean + psd_sqrt(cov).matrix() * z;
}

/// `diag` on the diagonal, `off` everywhere else.
inline PsdMatrix equicorrelated(Eigen::Index d, double diag, double off) {
    Matrix m = Matrix::Constant(d, d, off);
    m.diagonal().setConstant(diag);
    return PsdMatrix(m);
}

/// Numerical rank of a PSD matrix (eigenvalues above rel_tol * max(1, ||m||)).
inline Eigen::Index psd_rank(const SymMatrix& m, double rel_tol = 1e-9) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
    const Vector& ev = es.eigenvalues();
    const double cut = rel_tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
    return (ev.array() > cut).count();
}

}  // namespace mqb
