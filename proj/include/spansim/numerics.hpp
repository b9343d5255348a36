#pragma once

// Dense complex linear-algebra substrate (Eigen-backed).
//
// Conventions used throughout the library:
//  * subspaces are represented by matrices whose columns are orthonormal;
//  * rank decisions use singular values relative to the largest one, with
//    threshold kSvdRelTol;
//  * eigenphases of unitaries live in (-pi, pi].

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "spansim/rng.hpp"

namespace spansim {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kSvdRelTol = 1e-10;
inline constexpr double kPhaseZeroTol = 1e-9;
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Orthonormal basis of a subspace; `basis` has orthonormal columns
// (dim() == number of columns, possibly zero).
struct SubspaceBasis {
    ComplexMatrix basis;  // ambient_dim x dim

    Eigen::Index ambient_dim() const { return basis.rows(); }
    Eigen::Index dim() const { return basis.cols(); }
};

// Eigendecomposition of a unitary: phases[j] in (-pi, pi] and orthonormal
// eigenvector columns, satisfying U * vectors.col(j) = e^{i phases[j]} vectors.col(j).
struct EigenSystem {
    std::vector<double> phases;
    ComplexMatrix vectors;

    Eigen::Index dim() const { return vectors.rows(); }
    Eigen::Index count() const { return vectors.cols(); }
};

// Result of a (restricted) minimum-norm least-squares solve.
struct MinNormSolution {
    ComplexVector solution;  // ambient coordinates
    double norm_sq = 0.0;    // squared norm of the solution
    double residual = 0.0;   // ||A w - b||
};

// Result of minimizing ||W d||^2 subject to <a, d> = 1.
struct ConstrainedRowMin {
    ComplexVector d;
    double value = 0.0;  // attained ||W d||^2
    bool feasible = false;
};

// Orthonormal basis for the column span of `vectors`, dropping directions
// whose singular value is below rel_tol * sigma_max.
inline SubspaceBasis orthonormalize(const ComplexMatrix& vectors,
                                    double rel_tol = kSvdRelTol) {
    if (vectors.cols() == 0 || vectors.rows() == 0)
        return {ComplexMatrix(vectors.rows(), 0)};
    Eigen::JacobiSVD<ComplexMatrix> svd(vectors, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? sv(0) * rel_tol : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff && sv(rank) > 0.0) ++rank;
    return {svd.matrixU().leftCols(rank)};
}

// Orthogonal projector onto the span of an orthonormal basis.
inline ComplexMatrix projector_onto(const SubspaceBasis& basis) {
    if (basis.dim() == 0)
        return ComplexMatrix::Zero(basis.ambient_dim(), basis.ambient_dim());
    return basis.basis * basis.basis.adjoint();
}

// Orthonormal basis of ker(A).
inline SubspaceBasis kernel_basis(const ComplexMatrix& a,
                                  double rel_tol = kSvdRelTol) {
    if (a.cols() == 0) return {ComplexMatrix(0, 0)};
    if (a.rows() == 0)
        return {ComplexMatrix::Identity(a.cols(), a.cols())};
    Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? sv(0) * rel_tol : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff && sv(rank) > 0.0) ++rank;
    return {svd.matrixV().rightCols(a.cols() - rank)};
}

// Orthogonal projector onto ker(A), as a dim(A.cols()) square matrix.
inline ComplexMatrix kernel_projector(const ComplexMatrix& a,
                                      double rel_tol = kSvdRelTol) {
    return projector_onto(kernel_basis(a, rel_tol));
}

// Moore-Penrose pseudoinverse applied to a vector: A^+ b.
inline ComplexVector pinv_apply(const ComplexMatrix& a, const ComplexVector& b,
                                double rel_tol = kSvdRelTol) {
    if (a.rows() == 0 || a.cols() == 0) return ComplexVector::Zero(a.cols());
    Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? sv(0) * rel_tol : 0.0;
    ComplexVector coeffs = svd.matrixU().adjoint() * b;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        coeffs(i) = (sv(i) > cutoff && sv(i) > 0.0) ? coeffs(i) / sv(i) : Complex(0, 0);
    return svd.matrixV() * coeffs;
}

// Minimum-norm w with A w = b. If `restriction` is non-null, w is constrained
// to its span (the restriction basis must have orthonormal columns, so the
// coefficient norm equals the ambient norm).
inline MinNormSolution min_norm_solution(const ComplexMatrix& a,
                                         const ComplexVector& b,
                                         const SubspaceBasis* restriction = nullptr,
                                         double rel_tol = kSvdRelTol) {
    MinNormSolution out;
    if (restriction != nullptr) {
        const ComplexMatrix m = a * restriction->basis;
        const ComplexVector c = pinv_apply(m, b, rel_tol);
        out.solution = restriction->basis * c;
        out.norm_sq = c.squaredNorm();
        out.residual = (m * c - b).norm();
    } else {
        out.solution = pinv_apply(a, b, rel_tol);
        out.norm_sq = out.solution.squaredNorm();
        out.residual = (a * out.solution - b).norm();
    }
    return out;
}

// Minimize ||W d||^2 over d subject to <a, d> = 1 (inner product conjugates
// the first argument). Closed form via the SVD of W: if a has a component in
// ker(W) the minimum is 0; otherwise d = Q^+ a / <a, Q^+ a> with Q = W^H W.
inline ConstrainedRowMin constrained_row_min(const ComplexMatrix& w,
                                             const ComplexVector& a,
                                             double rel_tol = kSvdRelTol) {
    ConstrainedRowMin out;
    const double a_norm = a.norm();
    if (a_norm <= 0.0) return out;  // constraint <a, d> = 1 infeasible
    if (w.rows() == 0) {            // objective identically zero
        out.d = a / (a_norm * a_norm);
        out.value = 0.0;
        out.feasible = true;
        return out;
    }

    Eigen::JacobiSVD<ComplexMatrix> svd(w, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? sv(0) * rel_tol : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff && sv(rank) > 0.0) ++rank;

    const ComplexMatrix& v = svd.matrixV();
    // Component of a inside ker(W): if present, the objective can reach 0.
    ComplexVector a_ker = ComplexVector::Zero(a.size());
    for (Eigen::Index i = rank; i < v.cols(); ++i)
        a_ker += v.col(i) * (v.col(i).adjoint() * a)(0);
    if (a_ker.norm() > rel_tol * a_norm) {
        out.d = a_ker / a_ker.squaredNorm();
        out.value = (w * out.d).squaredNorm();
        out.feasible = true;
        return out;
    }

    // d = (W^H W)^+ a / <a, (W^H W)^+ a>; minimum value is 1 / <a, (W^H W)^+ a>.
    ComplexVector g = ComplexVector::Zero(a.size());
    for (Eigen::Index i = 0; i < rank; ++i) {
        const Complex coeff = (v.col(i).adjoint() * a)(0);
        g += v.col(i) * (coeff / (sv(i) * sv(i)));
    }
    const double denom = std::real((a.adjoint() * g)(0));
    if (!(denom > 0.0)) return out;  // a orthogonal to row space: infeasible
    out.d = g / denom;
    out.value = 1.0 / denom;
    out.feasible = true;
    return out;
}

namespace detail {
// Map an eigenvalue on the unit circle to its phase in (-pi, pi].
inline double phase_of(const Complex& lambda) {
    double theta = std::atan2(lambda.imag(), lambda.real());
    if (theta <= -M_PI) theta = M_PI;
    return theta;
}
}  // namespace detail

// Eigendecomposition of a unitary with guaranteed-orthonormal eigenvectors.
//
// Two-stage self-adjoint reduction: diagonalize the Hermitian part
// (U + U^H)/2, then within each (numerically) degenerate cluster diagonalize
// the restriction of the skew part (U - U^H)/(2i). Both stages use Hermitian
// solvers, so the final basis is orthonormal by construction even when U has
// large degenerate eigenspaces (common for products of two reflections).
inline EigenSystem unitary_eigensystem(const ComplexMatrix& u,
                                       double cluster_tol = 1e-9) {
    const Eigen::Index n = u.rows();
    EigenSystem es;
    es.phases.resize(static_cast<std::size_t>(n));
    es.vectors.resize(n, n);
    if (n == 0) return es;

    const ComplexMatrix herm = (u + u.adjoint()) / 2.0;
    const ComplexMatrix skew = (u - u.adjoint()) / Complex(0, 2);

    Eigen::SelfAdjointEigenSolver<ComplexMatrix> first(herm);
    if (first.info() != Eigen::Success)
        throw std::runtime_error("unitary_eigensystem: Hermitian solve failed");
    const RealVector& cos_vals = first.eigenvalues();
    const ComplexMatrix& q = first.eigenvectors();

    Eigen::Index start = 0;
    while (start < n) {
        Eigen::Index stop = start + 1;
        while (stop < n && cos_vals(stop) - cos_vals(stop - 1) <= cluster_tol) ++stop;
        const Eigen::Index len = stop - start;
        const ComplexMatrix block = q.middleCols(start, len);
        if (len == 1) {
            es.vectors.col(start) = block.col(0);
        } else {
            const ComplexMatrix small = block.adjoint() * skew * block;
            Eigen::SelfAdjointEigenSolver<ComplexMatrix> second((small + small.adjoint()) / 2.0);
            if (second.info() != Eigen::Success)
                throw std::runtime_error("unitary_eigensystem: cluster solve failed");
            es.vectors.middleCols(start, len) = block * second.eigenvectors();
        }
        start = stop;
    }

    for (Eigen::Index j = 0; j < n; ++j) {
        const Complex lambda = (es.vectors.col(j).adjoint() * u * es.vectors.col(j))(0);
        es.phases[static_cast<std::size_t>(j)] = detail::phase_of(lambda);
    }
    return es;
}

// Largest residual ||U v_j - e^{i theta_j} v_j|| over all eigenpairs.
inline double eigensystem_residual(const ComplexMatrix& u, const EigenSystem& es) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < es.count(); ++j) {
        const Complex lambda = std::polar(1.0, es.phases[static_cast<std::size_t>(j)]);
        worst = std::max(worst, (u * es.vectors.col(j) - lambda * es.vectors.col(j)).norm());
    }
    return worst;
}

inline bool is_unitary(const ComplexMatrix& u, double tol = 1e-10) {
    if (u.rows() != u.cols()) return false;
    return (u.adjoint() * u - ComplexMatrix::Identity(u.cols(), u.cols())).norm() <= tol * std::max<double>(1, u.cols());
}

// --- random test-data helpers (seeded through spansim::Rng) ---

inline Complex random_complex_gaussian(Rng& rng) {
    // Box-Muller; avoids log(0) by nudging u1 away from zero.
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return Complex(r * std::cos(2 * M_PI * u2), r * std::sin(2 * M_PI * u2));
}

inline ComplexMatrix random_complex_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    ComplexMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = random_complex_gaussian(rng);
    return m;
}

// Haar-ish random unitary via QR of a Gaussian matrix with phase fix.
inline ComplexMatrix random_unitary(Rng& rng, Eigen::Index n) {
    const ComplexMatrix g = random_complex_matrix(rng, n, n);
    Eigen::HouseholderQR<ComplexMatrix> qr(g);
    ComplexMatrix q = qr.householderQ();
    const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
        const Complex d = r(j, j);
        q.col(j) *= (std::abs(d) > 0 ? d / std::abs(d) : Complex(1, 0));
    }
    return q;
}

}  // namespace spansim
