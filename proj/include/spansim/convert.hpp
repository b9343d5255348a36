#pragma once

// State conversion driven by converting vector sets.
//
// A converting vector set over domain X in [q]^n consists of unit states
// rho_x, sigma_x together with vectors u_xj, v_xj satisfying, for all x, y,
//
//   <rho_x|rho_y> - <sigma_x|sigma_y> = sum_{j: x_j != y_j} <u_xj|v_yj>,
//
// with witness sizes w+(x) = sum_j ||v_xj||^2 and w-(x) = sum_j ||u_xj||^2.
// The conversion walk acts on (C^2 (x) H) (+) (C^n (x) C^q (x) C^d): with
// t_{x+-} = (|0>|rho_x> +- |1>|sigma_x>)/sqrt(2) and per-letter gadget states
// mu_a, the kernel vectors are
//
//   psi_{y,alpha,ehat} = sqrt(ehat/alpha) t_{y-} - sum_j |j>|mu_{y_j}>|u_yj>,
//
// Lambda projects onto the complement of span{psi_y}, Pi_x removes the
// |j>|mu_{x_j}> components, and U = (2 Pi_x - I)(2 Lambda - I).
//
// Two simulation backends compute identical quantities:
//  * a dense engine that materializes the ambient space (reference, any q);
//  * a reduced engine (q = 2) that works inside the U-invariant subspace
//    S = span({psi_y} U {Pi_x psi_y} U {t_{x+}, t_{x-}}), whose dimension is
//    at most 2|X| + 2 regardless of the ambient dimension. For q = 2 the two
//    gadget states mu_0, mu_1 are orthonormal, so vector-block components are
//    stored directly in the mu basis and Pi_x acts by dropping entries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "spansim/numerics.hpp"
#include "spansim/phasesim.hpp"
#include "spansim/rng.hpp"
#include "spansim/spanprog.hpp"
#include "spansim/sparsevec.hpp"

namespace spansim {

// ------------------------------------------------------------------
// Letter gadget: mu_a = (e_0 + f_a)/sqrt2, nu_a = (e_0 - f_a)/sqrt2 in C^q,
// where the f_a are unit simplex vectors with <f_a|f_b> = -1/(q-1). These
// give <mu_a|nu_b> = q/(2(q-1)) (1 - delta_ab) and unit norms; for q = 2 the
// mu_a are orthonormal and nu_a = mu_{1-a}.
// ------------------------------------------------------------------
struct GadgetVectors {
    int q = 2;
    ComplexMatrix mu;  // q x q, column a holds mu_a
    ComplexMatrix nu;  // q x q, column a holds nu_a
};

inline GadgetVectors build_gadget(int q) {
    if (q < 2) throw std::invalid_argument("build_gadget: q must be >= 2");
    // Simplex in C^q: g_a = e_a - (1/q) * ones has Gram delta_ab - 1/q;
    // scaling by sqrt(q/(q-1)) normalizes. Express in a (q-1)-dim basis.
    ComplexMatrix g = ComplexMatrix::Identity(q, q);
    g.array() -= 1.0 / q;
    g *= std::sqrt(static_cast<double>(q) / (q - 1));
    const SubspaceBasis span = orthonormalize(g);
    if (span.dim() != q - 1) throw std::runtime_error("build_gadget: simplex rank");
    const ComplexMatrix f = span.basis.adjoint() * g;  // (q-1) x q coordinates

    GadgetVectors out;
    out.q = q;
    out.mu = ComplexMatrix::Zero(q, q);
    out.nu = ComplexMatrix::Zero(q, q);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int a = 0; a < q; ++a) {
        out.mu(0, a) = inv_sqrt2;
        out.nu(0, a) = inv_sqrt2;
        out.mu.block(1, a, q - 1, 1) = inv_sqrt2 * f.col(a);
        out.nu.block(1, a, q - 1, 1) = -inv_sqrt2 * f.col(a);
    }
    return out;
}

// ------------------------------------------------------------------
// Converting vector set with sparse storage. dim_state and dim_vec are
// (upper bounds on) the key ranges of the state and vector coordinates.
// ------------------------------------------------------------------
struct ConvertingVectorSet {
    int n = 0;
    int q = 2;
    std::uint64_t dim_state = 0;
    std::uint64_t dim_vec = 0;
    std::vector<InputWord> domain;
    std::vector<SparseVec> rho;                // unit states, keys < dim_state
    std::vector<SparseVec> sigma;              // unit states, keys < dim_state
    std::vector<std::vector<SparseVec>> u;     // [x][j], keys < dim_vec
    std::vector<std::vector<SparseVec>> v;     // [x][j], keys < dim_vec

    std::size_t size() const { return domain.size(); }

    std::optional<std::size_t> find(const InputWord& x) const {
        for (std::size_t i = 0; i < domain.size(); ++i)
            if (domain[i] == x) return i;
        return std::nullopt;
    }
};

struct WitnessSizes {
    double w_plus = 0.0;
    double w_minus = 0.0;
};

inline WitnessSizes witness_sizes(const ConvertingVectorSet& cvs, std::size_t x) {
    WitnessSizes s;
    for (int j = 0; j < cvs.n; ++j) {
        s.w_plus += cvs.v[x][static_cast<std::size_t>(j)].norm_sq();
        s.w_minus += cvs.u[x][static_cast<std::size_t>(j)].norm_sq();
    }
    return s;
}

inline WitnessSizes max_witness_sizes(const ConvertingVectorSet& cvs) {
    WitnessSizes m;
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        const WitnessSizes s = witness_sizes(cvs, x);
        m.w_plus = std::max(m.w_plus, s.w_plus);
        m.w_minus = std::max(m.w_minus, s.w_minus);
    }
    return m;
}

// Same states and Gram identity, with the u and v families exchanged, so the
// positive and negative witness sizes trade places.
inline ConvertingVectorSet complement_cvs(const ConvertingVectorSet& cvs) {
    ConvertingVectorSet out = cvs;
    std::swap(out.u, out.v);
    return out;
}

// Scale u by (W+/W-)^{1/4} and v by (W-/W+)^{1/4}: products of the two
// factors are 1, so the Gram identity is untouched, while both maximum
// witness sizes become sqrt(W+ W-).
inline ConvertingVectorSet rescale_balanced(const ConvertingVectorSet& cvs) {
    const WitnessSizes m = max_witness_sizes(cvs);
    if (!(m.w_plus > 0) || !(m.w_minus > 0))
        throw std::invalid_argument("rescale_balanced: witness sizes must be positive");
    const double su = std::pow(m.w_plus / m.w_minus, 0.25);
    const double sv = std::pow(m.w_minus / m.w_plus, 0.25);
    ConvertingVectorSet out = cvs;
    for (auto& row : out.u)
        for (auto& vec : row) vec *= Complex(su, 0);
    for (auto& row : out.v)
        for (auto& vec : row) vec *= Complex(sv, 0);
    return out;
}

// Structural checks (shapes, unit states, key ranges, distinct inputs).
inline std::optional<std::string> validate_cvs(const ConvertingVectorSet& cvs) {
    if (cvs.n <= 0 || cvs.q < 2) return "n must be >= 1 and q >= 2";
    const std::size_t d = cvs.size();
    if (cvs.rho.size() != d || cvs.sigma.size() != d) return "state count mismatch";
    if (cvs.u.size() != d || cvs.v.size() != d) return "vector count mismatch";
    for (std::size_t x = 0; x < d; ++x) {
        if (static_cast<int>(cvs.domain[x].size()) != cvs.n) return "input length mismatch";
        for (int letter : cvs.domain[x])
            if (letter < 0 || letter >= cvs.q) return "letter out of range";
        for (std::size_t y = x + 1; y < d; ++y)
            if (cvs.domain[x] == cvs.domain[y]) return "duplicate domain input";
        if (std::abs(cvs.rho[x].norm_sq() - 1.0) > 1e-9) return "rho not unit";
        if (std::abs(cvs.sigma[x].norm_sq() - 1.0) > 1e-9) return "sigma not unit";
        for (const auto& e : cvs.rho[x].entries)
            if (e.first >= cvs.dim_state) return "rho key out of range";
        for (const auto& e : cvs.sigma[x].entries)
            if (e.first >= cvs.dim_state) return "sigma key out of range";
        if (static_cast<int>(cvs.u[x].size()) != cvs.n ||
            static_cast<int>(cvs.v[x].size()) != cvs.n)
            return "per-position vector count mismatch";
        for (int j = 0; j < cvs.n; ++j) {
            for (const auto& e : cvs.u[x][static_cast<std::size_t>(j)].entries)
                if (e.first >= cvs.dim_vec) return "u key out of range";
            for (const auto& e : cvs.v[x][static_cast<std::size_t>(j)].entries)
                if (e.first >= cvs.dim_vec) return "v key out of range";
        }
    }
    return std::nullopt;
}

// Check the defining Gram identity over all domain pairs; returns the largest
// violation |lhs - rhs|.
inline double gram_identity_error(const ConvertingVectorSet& cvs) {
    double worst = 0.0;
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        for (std::size_t y = 0; y < cvs.size(); ++y) {
            const Complex lhs =
                dot(cvs.rho[x], cvs.rho[y]) - dot(cvs.sigma[x], cvs.sigma[y]);
            Complex rhs(0, 0);
            for (int j = 0; j < cvs.n; ++j) {
                if (cvs.domain[x][static_cast<std::size_t>(j)] ==
                    cvs.domain[y][static_cast<std::size_t>(j)])
                    continue;
                rhs += dot(cvs.u[x][static_cast<std::size_t>(j)],
                           cvs.v[y][static_cast<std::size_t>(j)]);
            }
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

// ------------------------------------------------------------------
// Ambient key layout shared by both engines. Keys below 2 * dim_state form
// the (C^2 (x) H) block; the remainder is (position j, gadget slot a, vector
// key d). The reduced engine uses a = letter (mu-basis component); the dense
// engine uses a = gadget coordinate.
// ------------------------------------------------------------------
struct ConversionLayout {
    int n = 0;
    int q = 2;
    std::uint64_t dim_state = 0;
    std::uint64_t dim_vec = 0;

    std::uint64_t t_key(int bit, std::uint64_t s) const {
        return static_cast<std::uint64_t>(bit) * dim_state + s;
    }
    std::uint64_t vec_key(int j, int a, std::uint64_t d) const {
        const std::uint64_t slot = static_cast<std::uint64_t>(j) * q + a;
        return 2 * dim_state + slot * dim_vec + d;
    }
    std::uint64_t total() const {
        return 2 * dim_state +
               static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(q) * dim_vec;
    }
};

inline ConversionLayout layout_of(const ConvertingVectorSet& cvs) {
    return ConversionLayout{cvs.n, cvs.q, cvs.dim_state, cvs.dim_vec};
}

namespace detail {

// t_{x+-} as sparse vectors in the shared layout.
inline SparseVec t_vector(const ConvertingVectorSet& cvs, const ConversionLayout& lay,
                          std::size_t x, int sign) {
    SparseVec t;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (const auto& e : cvs.rho[x].entries)
        t.add_term(lay.t_key(0, e.first), inv_sqrt2 * e.second);
    for (const auto& e : cvs.sigma[x].entries)
        t.add_term(lay.t_key(1, e.first), (sign > 0 ? inv_sqrt2 : -inv_sqrt2) * e.second);
    t.normalize();
    return t;
}

// psi_{y,alpha,ehat} in mu-basis coordinates (valid as stored coordinates for
// any q; orthonormal interpretation requires q = 2).
inline SparseVec psi_vector_mu(const ConvertingVectorSet& cvs, const ConversionLayout& lay,
                               std::size_t y, double alpha, double eps_hat) {
    SparseVec psi;
    const double t_coeff = std::sqrt(eps_hat / alpha);
    const SparseVec tm = t_vector(cvs, lay, y, -1);
    for (const auto& e : tm.entries) psi.add_term(e.first, t_coeff * e.second);
    for (int j = 0; j < cvs.n; ++j) {
        const SparseVec& uv = cvs.u[y][static_cast<std::size_t>(j)];
        const int letter = cvs.domain[y][static_cast<std::size_t>(j)];
        for (const auto& e : uv.entries)
            psi.add_term(lay.vec_key(j, letter, e.first), -e.second);
    }
    psi.normalize();
    return psi;
}

}  // namespace detail

// ------------------------------------------------------------------
// Dense reference engine (any q); ambient dimension must stay small.
// ------------------------------------------------------------------
class DenseConversionEngine {
  public:
    DenseConversionEngine(const ConvertingVectorSet& cvs, std::size_t x_index,
                          double alpha, double eps_hat)
        : lay_(layout_of(cvs)) {
        const std::uint64_t total = lay_.total();
        if (total > 4096)
            throw std::invalid_argument("DenseConversionEngine: ambient space too large");
        const Eigen::Index dim = static_cast<Eigen::Index>(total);
        const GadgetVectors gadget = build_gadget(cvs.q);

        // Kernel vectors psi_y with the gadget expanded into coordinates.
        ComplexMatrix psis = ComplexMatrix::Zero(dim, static_cast<Eigen::Index>(cvs.size()));
        for (std::size_t y = 0; y < cvs.size(); ++y) {
            ComplexVector col = ComplexVector::Zero(dim);
            const SparseVec tm = detail::t_vector(cvs, lay_, y, -1);
            const double t_coeff = std::sqrt(eps_hat / alpha);
            for (const auto& e : tm.entries)
                col(static_cast<Eigen::Index>(e.first)) += t_coeff * e.second;
            for (int j = 0; j < cvs.n; ++j) {
                const SparseVec& uv = cvs.u[y][static_cast<std::size_t>(j)];
                const int letter = cvs.domain[y][static_cast<std::size_t>(j)];
                for (const auto& e : uv.entries)
                    for (int g = 0; g < cvs.q; ++g)
                        col(static_cast<Eigen::Index>(lay_.vec_key(j, g, e.first))) -=
                            gadget.mu(g, letter) * e.second;
            }
            psis.col(static_cast<Eigen::Index>(y)) = col;
        }
        const ComplexMatrix p_kernel = projector_onto(orthonormalize(psis));

        // Pi_x: identity minus the |j><j| (x) |mu_{x_j}><mu_{x_j}| (x) I blocks.
        ComplexMatrix pi = ComplexMatrix::Identity(dim, dim);
        const InputWord& x = cvs.domain[x_index];
        for (int j = 0; j < cvs.n; ++j) {
            const int letter = x[static_cast<std::size_t>(j)];
            const ComplexVector mu = gadget.mu.col(letter);
            for (std::uint64_t dkey = 0; dkey < cvs.dim_vec; ++dkey)
                for (int g1 = 0; g1 < cvs.q; ++g1)
                    for (int g2 = 0; g2 < cvs.q; ++g2)
                        pi(static_cast<Eigen::Index>(lay_.vec_key(j, g1, dkey)),
                           static_cast<Eigen::Index>(lay_.vec_key(j, g2, dkey))) -=
                            mu(g1) * std::conj(mu(g2));
        }

        const ComplexMatrix refl_pi = 2.0 * pi - ComplexMatrix::Identity(dim, dim);
        const ComplexMatrix refl_lambda =
            ComplexMatrix::Identity(dim, dim) - 2.0 * p_kernel;
        unitary_ = refl_pi * refl_lambda;
        sys_ = unitary_eigensystem(unitary_);

        init_ = ComplexVector::Zero(dim);
        for (const auto& e : cvs.rho[x_index].entries)
            init_(static_cast<Eigen::Index>(lay_.t_key(0, e.first))) = e.second;
        target_ = ComplexVector::Zero(dim);
        for (const auto& e : cvs.sigma[x_index].entries)
            target_(static_cast<Eigen::Index>(lay_.t_key(1, e.first))) = e.second;
    }

    Eigen::Index dim() const { return unitary_.rows(); }
    double unitarity_error() const {
        return (unitary_.adjoint() * unitary_ -
                ComplexMatrix::Identity(dim(), dim()))
            .norm();
    }
    double init_norm_error() const { return std::abs(init_.norm() - 1.0); }

    double check_probability(const PhaseCheckSpec& spec) const {
        return spansim::check_probability(sys_, init_, spec);
    }
    // Check probability of the symmetric combination t_{x+}, which carries
    // the positive-witness guarantee (close to 1 once alpha >= w+(x)).
    double plus_state_check_probability(const PhaseCheckSpec& spec) const {
        const ComplexVector plus = (init_ + target_) / std::sqrt(2.0);
        return spansim::check_probability(sys_, plus, spec);
    }
    double minus_state_check_probability(const PhaseCheckSpec& spec) const {
        const ComplexVector minus = (init_ - target_) / std::sqrt(2.0);
        return spansim::check_probability(sys_, minus, spec);
    }
    // || P_Theta t_{x-} ||^2: eigenphase mass of t_{x-} within the precision
    // window, bounded by eps_hat^2 / 2 once alpha >= 1/W-.
    double minus_state_low_phase_mass(const PhaseCheckSpec& spec) const {
        const ComplexVector minus = (init_ - target_) / std::sqrt(2.0);
        const ComplexVector c = sys_.vectors.adjoint() * minus;
        double mass = 0.0;
        for (Eigen::Index k = 0; k < c.size(); ++k)
            if (std::abs(sys_.phases[static_cast<std::size_t>(k)]) <= spec.theta)
                mass += std::norm(c(k));
        return mass;
    }
    Complex target_overlap(const PhaseCheckSpec& spec) const {
        return reflection_target_overlap(sys_, init_, target_, spec);
    }
    double reflection_distance(const PhaseCheckSpec& spec) const {
        return spansim::reflection_distance(sys_, init_, target_, spec);
    }

    // Post-reflection probability of each group of ambient keys (keys must
    // address the C^2 (x) H block).
    std::vector<double> group_probabilities(
        const std::vector<std::vector<std::uint64_t>>& groups,
        const PhaseCheckSpec& spec) const {
        const RealVector p = reflection_measurement_distribution(sys_, init_, spec);
        std::vector<double> out;
        out.reserve(groups.size());
        for (const auto& g : groups) {
            double s = 0.0;
            for (std::uint64_t key : g) s += p(static_cast<Eigen::Index>(key));
            out.push_back(s);
        }
        return out;
    }

  private:
    ConversionLayout lay_;
    ComplexMatrix unitary_;
    EigenSystem sys_;
    ComplexVector init_;
    ComplexVector target_;
};

// ------------------------------------------------------------------
// Reduced engine (q = 2): everything happens inside the invariant subspace
// spanned by {psi_y}, {Pi_x psi_y} and {t_{x+}, t_{x-}}. The generators are
// sparse; the subspace has dimension at most 2|X| + 2.
// ------------------------------------------------------------------
class ReducedConversionEngine {
  public:
    ReducedConversionEngine(const ConvertingVectorSet& cvs, std::size_t x_index,
                            double alpha, double eps_hat)
        : lay_(layout_of(cvs)) {
        if (cvs.q != 2)
            throw std::invalid_argument("ReducedConversionEngine: requires q = 2");
        const std::size_t y_count = cvs.size();
        const InputWord& x = cvs.domain[x_index];

        // Generators: normalized psi_y, then Pi_x applied to each, then t_x+-.
        gens_.reserve(2 * y_count + 2);
        for (std::size_t y = 0; y < y_count; ++y) {
            SparseVec psi = detail::psi_vector_mu(cvs, lay_, y, alpha, eps_hat);
            const double norm = std::sqrt(psi.norm_sq());
            if (norm <= 0.0)
                throw std::runtime_error("ReducedConversionEngine: zero kernel vector");
            psi *= Complex(1.0 / norm, 0);
            gens_.push_back(std::move(psi));
        }
        for (std::size_t y = 0; y < y_count; ++y)
            gens_.push_back(apply_pi(gens_[y], x));
        gens_.push_back(detail::t_vector(cvs, lay_, x_index, +1));
        gens_.push_back(detail::t_vector(cvs, lay_, x_index, -1));
        const std::size_t g_count = gens_.size();

        // Gram matrix of the generators.
        ComplexMatrix gram(g_count, g_count);
        for (std::size_t i = 0; i < g_count; ++i)
            for (std::size_t j = i; j < g_count; ++j) {
                const Complex d = dot(gens_[i], gens_[j]);
                gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
                gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                    std::conj(d);
            }
        gram_ = gram;

        // Orthonormal basis from the Gram eigendecomposition: columns of
        // coeff_ are generator-coordinates of the basis vectors.
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(gram);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("ReducedConversionEngine: Gram solve failed");
        const RealVector& ev = es.eigenvalues();
        const double cutoff = std::max(ev(ev.size() - 1), 0.0) * 1e-12;
        Eigen::Index rank = 0;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (ev(i) > cutoff && ev(i) > 0.0) ++rank;
        coeff_.resize(static_cast<Eigen::Index>(g_count), rank);
        Eigen::Index at = 0;
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            if (!(ev(i) > cutoff && ev(i) > 0.0)) continue;
            coeff_.col(at++) = es.eigenvectors().col(i) / std::sqrt(ev(i));
        }

        // Generator-coordinate representations of the two reflections.
        // P_K maps generator k to sum_y beta_y psi_y with G_psi beta = gram
        // column restricted to the psi rows.
        const Eigen::Index yc = static_cast<Eigen::Index>(y_count);
        const ComplexMatrix g_psi = gram.topLeftCorner(yc, yc);
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> ps(g_psi);
        if (ps.info() != Eigen::Success)
            throw std::runtime_error("ReducedConversionEngine: kernel Gram solve failed");
        const RealVector& pev = ps.eigenvalues();
        const double pcut = std::max(pev(pev.size() - 1), 0.0) * 1e-12;
        ComplexMatrix g_psi_pinv = ComplexMatrix::Zero(yc, yc);
        for (Eigen::Index i = 0; i < pev.size(); ++i) {
            if (!(pev(i) > pcut && pev(i) > 0.0)) continue;
            g_psi_pinv +=
                ps.eigenvectors().col(i) * ps.eigenvectors().col(i).adjoint() / pev(i);
        }
        ComplexMatrix t_pk =
            ComplexMatrix::Zero(static_cast<Eigen::Index>(g_count),
                                static_cast<Eigen::Index>(g_count));
        t_pk.topRows(yc) =
            g_psi_pinv * gram.topRows(yc);  // beta coefficients for every generator

        ComplexMatrix t_pi = ComplexMatrix::Zero(static_cast<Eigen::Index>(g_count),
                                                 static_cast<Eigen::Index>(g_count));
        for (Eigen::Index y = 0; y < yc; ++y) {
            t_pi(yc + y, y) = Complex(1, 0);       // Pi_x psi_y
            t_pi(yc + y, yc + y) = Complex(1, 0);  // idempotent on the images
        }
        t_pi(2 * yc, 2 * yc) = Complex(1, 0);          // t_{x+}
        t_pi(2 * yc + 1, 2 * yc + 1) = Complex(1, 0);  // t_{x-}

        const ComplexMatrix eye =
            ComplexMatrix::Identity(static_cast<Eigen::Index>(g_count),
                                    static_cast<Eigen::Index>(g_count));
        const ComplexMatrix t_u = (2.0 * t_pi - eye) * (eye - 2.0 * t_pk);

        // Matrix of U restricted to S in the orthonormal basis, and the
        // initial/target coordinates.
        unitary_ = coeff_.adjoint() * gram * (t_u * coeff_);
        sys_ = unitary_eigensystem(unitary_);

        ComplexVector z_init =
            ComplexVector::Zero(static_cast<Eigen::Index>(g_count));
        z_init(2 * yc) = Complex(1.0 / std::sqrt(2.0), 0);
        z_init(2 * yc + 1) = Complex(1.0 / std::sqrt(2.0), 0);
        init_ = coeff_.adjoint() * (gram * z_init);
        ComplexVector z_target =
            ComplexVector::Zero(static_cast<Eigen::Index>(g_count));
        z_target(2 * yc) = Complex(1.0 / std::sqrt(2.0), 0);
        z_target(2 * yc + 1) = Complex(-1.0 / std::sqrt(2.0), 0);
        target_ = coeff_.adjoint() * (gram * z_target);
    }

    Eigen::Index dim() const { return unitary_.rows(); }
    double unitarity_error() const {
        return (unitary_.adjoint() * unitary_ -
                ComplexMatrix::Identity(dim(), dim()))
            .norm();
    }
    double init_norm_error() const { return std::abs(init_.norm() - 1.0); }

    double check_probability(const PhaseCheckSpec& spec) const {
        return spansim::check_probability(sys_, init_, spec);
    }
    // Coordinates are linear, so (init + target)/sqrt(2) is exactly t_{x+}.
    double plus_state_check_probability(const PhaseCheckSpec& spec) const {
        const ComplexVector plus = (init_ + target_) / std::sqrt(2.0);
        return spansim::check_probability(sys_, plus, spec);
    }
    double minus_state_check_probability(const PhaseCheckSpec& spec) const {
        const ComplexVector minus = (init_ - target_) / std::sqrt(2.0);
        return spansim::check_probability(sys_, minus, spec);
    }
    double minus_state_low_phase_mass(const PhaseCheckSpec& spec) const {
        const ComplexVector minus = (init_ - target_) / std::sqrt(2.0);
        const ComplexVector c = sys_.vectors.adjoint() * minus;
        double mass = 0.0;
        for (Eigen::Index k = 0; k < c.size(); ++k)
            if (std::abs(sys_.phases[static_cast<std::size_t>(k)]) <= spec.theta)
                mass += std::norm(c(k));
        return mass;
    }
    Complex target_overlap(const PhaseCheckSpec& spec) const {
        return reflection_target_overlap(sys_, init_, target_, spec);
    }
    double reflection_distance(const PhaseCheckSpec& spec) const {
        return spansim::reflection_distance(sys_, init_, target_, spec);
    }

    std::vector<double> group_probabilities(
        const std::vector<std::vector<std::uint64_t>>& groups,
        const PhaseCheckSpec& spec) const {
        // p(a) = y(a)^H M y(a) with y_k(a) = c_k <a|u_k> and M the Gram of the
        // reflected ancilla states.
        const ComplexMatrix m = chi_gram(sys_.phases, spec);
        const ComplexVector c = sys_.vectors.adjoint() * init_;
        std::vector<double> out;
        out.reserve(groups.size());
        for (const auto& g : groups) {
            double total = 0.0;
            for (std::uint64_t key : g) {
                // <a|u_k> = sum_i V(i,k) <a|b_i>, linear in the basis rows.
                const ComplexVector row = ambient_row(key);
                const ComplexVector amps = (row.transpose() * sys_.vectors).transpose();
                const ComplexVector y = c.cwiseProduct(amps);
                const double pa = (y.adjoint() * (m * y)).value().real();
                total += std::max(0.0, pa);
            }
            out.push_back(total);
        }
        return out;
    }

  private:
    // Pi_x in the mu basis: drop vector-block entries whose gadget slot
    // matches the input letter at that position.
    SparseVec apply_pi(const SparseVec& s, const InputWord& x) const {
        SparseVec out;
        const std::uint64_t t_limit = 2 * lay_.dim_state;
        for (const auto& e : s.entries) {
            if (e.first < t_limit) {
                out.add_term(e.first, e.second);
                continue;
            }
            const std::uint64_t rest = e.first - t_limit;
            const std::uint64_t slot = rest / lay_.dim_vec;
            const int j = static_cast<int>(slot / static_cast<std::uint64_t>(lay_.q));
            const int a = static_cast<int>(slot % static_cast<std::uint64_t>(lay_.q));
            if (a == x[static_cast<std::size_t>(j)]) continue;
            out.add_term(e.first, e.second);
        }
        out.normalize();
        return out;
    }

    // <a|b_i> for every orthonormal basis vector, for one ambient key.
    ComplexVector ambient_row(std::uint64_t key) const {
        ComplexVector gen_amp = ComplexVector::Zero(static_cast<Eigen::Index>(gens_.size()));
        for (std::size_t i = 0; i < gens_.size(); ++i) {
            const auto& entries = gens_[i].entries;
            auto it = std::lower_bound(
                entries.begin(), entries.end(), key,
                [](const std::pair<std::uint64_t, Complex>& e, std::uint64_t k) {
                    return e.first < k;
                });
            if (it != entries.end() && it->first == key)
                gen_amp(static_cast<Eigen::Index>(i)) = it->second;
        }
        // <a|b_i> = sum_k coeff(k,i) <a|gen_k>.
        return (gen_amp.transpose() * coeff_).transpose();
    }

    ConversionLayout lay_;
    std::vector<SparseVec> gens_;
    ComplexMatrix gram_;
    ComplexMatrix coeff_;  // generator coordinates of the orthonormal basis
    ComplexMatrix unitary_;
    EigenSystem sys_;
    ComplexVector init_;
    ComplexVector target_;
};

// ------------------------------------------------------------------
// Backend dispatch.
// ------------------------------------------------------------------
enum class ConversionBackend { automatic, dense, reduced };

class ConversionEngine {
  public:
    ConversionEngine(const ConvertingVectorSet& cvs, std::size_t x_index, double alpha,
                     double eps_hat, ConversionBackend backend = ConversionBackend::automatic) {
        const bool use_reduced =
            backend == ConversionBackend::reduced ||
            (backend == ConversionBackend::automatic && cvs.q == 2);
        if (use_reduced)
            reduced_ = std::make_unique<ReducedConversionEngine>(cvs, x_index, alpha, eps_hat);
        else
            dense_ = std::make_unique<DenseConversionEngine>(cvs, x_index, alpha, eps_hat);
    }

    Eigen::Index dim() const { return reduced_ ? reduced_->dim() : dense_->dim(); }
    double unitarity_error() const {
        return reduced_ ? reduced_->unitarity_error() : dense_->unitarity_error();
    }
    double init_norm_error() const {
        return reduced_ ? reduced_->init_norm_error() : dense_->init_norm_error();
    }
    double check_probability(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->check_probability(spec)
                        : dense_->check_probability(spec);
    }
    double plus_state_check_probability(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->plus_state_check_probability(spec)
                        : dense_->plus_state_check_probability(spec);
    }
    double minus_state_check_probability(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->minus_state_check_probability(spec)
                        : dense_->minus_state_check_probability(spec);
    }
    double minus_state_low_phase_mass(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->minus_state_low_phase_mass(spec)
                        : dense_->minus_state_low_phase_mass(spec);
    }
    Complex target_overlap(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->target_overlap(spec) : dense_->target_overlap(spec);
    }
    double reflection_distance(const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->reflection_distance(spec)
                        : dense_->reflection_distance(spec);
    }
    std::vector<double> group_probabilities(
        const std::vector<std::vector<std::uint64_t>>& groups,
        const PhaseCheckSpec& spec) const {
        return reduced_ ? reduced_->group_probabilities(groups, spec)
                        : dense_->group_probabilities(groups, spec);
    }

  private:
    std::unique_ptr<ReducedConversionEngine> reduced_;
    std::unique_ptr<DenseConversionEngine> dense_;
};

// ------------------------------------------------------------------
// Amplitude estimation, modeled at the interface level: the estimate is
// within the additive error with the requested probability, otherwise
// arbitrary; the cost in circuit invocations follows the standard
// (1/error) log log scaling.
// ------------------------------------------------------------------
struct AmplitudeEstimate {
    double value = 0.0;
    std::uint64_t circuit_calls = 0;
};

inline std::uint64_t amplitude_estimation_cost(double additive_error, double fail_prob,
                                               double cost_constant = 50.0) {
    if (!(additive_error > 0) || !(fail_prob > 0))
        throw std::invalid_argument("amplitude_estimation_cost: bad parameters");
    const double log_term = std::max(1.0, std::log2(1.0 / additive_error));
    const double calls =
        std::ceil(cost_constant / additive_error * std::log(log_term / fail_prob));
    return static_cast<std::uint64_t>(std::max(1.0, calls));
}

inline AmplitudeEstimate estimate_amplitude(double true_value, double additive_error,
                                            double fail_prob, Rng& rng,
                                            double cost_constant = 50.0) {
    AmplitudeEstimate out;
    out.circuit_calls = amplitude_estimation_cost(additive_error, fail_prob, cost_constant);
    if (rng.uniform() < fail_prob) {
        out.value = rng.uniform();
        return out;
    }
    const double lo = std::max(0.0, true_value - additive_error);
    const double hi = std::min(1.0, true_value + additive_error);
    out.value = rng.uniform(lo, hi);
    return out;
}

// ------------------------------------------------------------------
// State conversion with unknown witness size: geometric sweep over alpha
// against the vector set and its witness-swapped complement, probing with
// amplitude-estimated phase checks, then one phase reflection.
// ------------------------------------------------------------------
struct StateConversionOptions {
    double eps = 0.2;     // target conversion error
    double delta = 0.1;   // probing failure probability (< 1/3)
    ConversionBackend backend = ConversionBackend::automatic;
    double ae_cost_constant = 50.0;
    // Optional a-priori bounds on the maximum witness sizes (0 = compute from
    // the stored domain). Lets a run over a sampled sub-domain use the bounds
    // that hold for the full promise class.
    double w_plus_bound = 0.0;
    double w_minus_bound = 0.0;
};

struct StateConversionResult {
    bool used_complement = false;
    int i_stop = 0;
    double alpha = 0.0;
    bool exhausted = false;
    double last_estimate = 0.0;
    double conversion_error = 0.0;  // exact || R(init) - target ||
    QueryLedger ledger;
};

inline WitnessSizes resolve_witness_bounds(const ConvertingVectorSet& cvs,
                                           double w_plus_bound,
                                           double w_minus_bound) {
    if (w_plus_bound > 0 && w_minus_bound > 0)
        return WitnessSizes{w_plus_bound, w_minus_bound};
    WitnessSizes w = max_witness_sizes(cvs);
    if (w_plus_bound > 0) w.w_plus = w_plus_bound;
    if (w_minus_bound > 0) w.w_minus = w_minus_bound;
    return w;
}

// Runs the doubling sweep over (alpha, program/complement) rounds with an
// amplitude-estimated phase check per round, then one phase reflection at the
// first passing round. Exact per-round quantities are cached, so repeated
// randomized runs on the same input only pay for the sampling.
class StateConverter {
  public:
    StateConverter(const ConvertingVectorSet& cvs, const StateConversionOptions& opt)
        : cvs_(&cvs), comp_(complement_cvs(cvs)), opt_(opt) {
        if (!(opt.delta > 0) || !(opt.delta < 1.0 / 3.0))
            throw std::invalid_argument("StateConverter: delta must be in (0, 1/3)");
        if (!(opt.eps > 0)) throw std::invalid_argument("StateConverter: eps <= 0");
        eps_hat_ = opt.eps * opt.eps / 36.0;
        w_ = resolve_witness_bounds(cvs, opt.w_plus_bound, opt.w_minus_bound);
        t_rounds_ = std::max(
            0, static_cast<int>(std::ceil(std::log2(w_.w_plus * w_.w_minus) - 1e-12)));
    }

    StateConversionResult run(std::size_t x_index, Rng& rng) {
        StateConversionResult res;
        const RoundData* last = nullptr;
        bool found = false;
        for (int i = 0; i <= t_rounds_ && !found; ++i) {
            const double delta_i = opt_.delta * std::ldexp(1.0, i - 1 - t_rounds_);
            for (int side = 0; side < 2 && !found; ++side) {
                res.ledger.rounds += 1;
                const RoundData& rd = round_data(x_index, side, i);
                last = &rd;
                const AmplitudeEstimate ae = estimate_amplitude(
                    rd.check_prob, eps_hat_ / 4.0, delta_i, rng, opt_.ae_cost_constant);
                res.ledger.estimation_calls += 1;
                res.ledger.add_check(rd.spec, ae.circuit_calls);
                res.last_estimate = ae.value;
                res.i_stop = i;
                res.used_complement = side == 1;
                res.alpha = rd.alpha;
                if (ae.value - 0.5 > -2.75 * eps_hat_) found = true;
            }
        }
        res.exhausted = !found;
        res.ledger.add_reflection(last->spec);
        res.conversion_error = last->reflection_error;
        return res;
    }

    int sweep_rounds() const { return t_rounds_; }
    const WitnessSizes& witness_bounds() const { return w_; }

  private:
    struct RoundData {
        PhaseCheckSpec spec;
        double alpha = 0.0;
        double check_prob = 0.0;
        double reflection_error = 0.0;
    };

    const RoundData& round_data(std::size_t x_index, int side, int i) {
        const std::uint64_t key =
            (static_cast<std::uint64_t>(x_index) << 16) |
            (static_cast<std::uint64_t>(side) << 15) | static_cast<std::uint64_t>(i);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        const ConvertingVectorSet& prog = side == 0 ? *cvs_ : comp_;
        const double w_minus = side == 0 ? w_.w_minus : w_.w_plus;
        RoundData rd;
        rd.alpha = std::ldexp(1.0, i) / w_minus;
        const double theta = std::pow(eps_hat_, 1.5) / std::sqrt(rd.alpha * w_minus);
        rd.spec = make_phase_check_spec(theta, eps_hat_ * eps_hat_);
        const ConversionEngine engine(prog, x_index, rd.alpha, eps_hat_, opt_.backend);
        rd.check_prob = engine.check_probability(rd.spec);
        rd.reflection_error = engine.reflection_distance(rd.spec);
        return cache_.emplace(key, std::move(rd)).first->second;
    }

    const ConvertingVectorSet* cvs_;
    ConvertingVectorSet comp_;
    StateConversionOptions opt_;
    double eps_hat_ = 0.0;
    WitnessSizes w_;
    int t_rounds_ = 0;
    std::unordered_map<std::uint64_t, RoundData> cache_;
};

inline StateConversionResult run_state_conversion(const ConvertingVectorSet& cvs,
                                                  std::size_t x_index,
                                                  const StateConversionOptions& opt,
                                                  Rng& rng) {
    StateConverter converter(cvs, opt);
    return converter.run(x_index, rng);
}

// ------------------------------------------------------------------
// Verified function evaluation: the sweep applies the phase reflection,
// measures, decodes a guess from the state register and verifies it with a
// constant number of extra queries. Requires every sigma_x to be a single
// standard-basis state (the function label).
// ------------------------------------------------------------------
struct EvaluationOptions {
    double delta = 0.25;  // failure probability, must be < 2^{-1/2}
    std::uint64_t verifier_queries = 2;
    ConversionBackend backend = ConversionBackend::automatic;
    double w_plus_bound = 0.0;   // see StateConversionOptions
    double w_minus_bound = 0.0;
};

struct EvaluationResult {
    bool error = false;             // sweep exhausted without a verified answer
    std::uint64_t label_key = 0;    // state key of the returned answer
    int i_stop = 0;
    bool used_complement = false;
    QueryLedger ledger;
};

class VerifiedEvaluator {
  public:
    VerifiedEvaluator(const ConvertingVectorSet& cvs, const EvaluationOptions& opt)
        : cvs_(&cvs), comp_(complement_cvs(cvs)), opt_(opt) {
        if (!(opt.delta > 0) || !(opt.delta < 0.70710678118))
            throw std::invalid_argument("VerifiedEvaluator: delta must be in (0, 2^-1/2)");
        eps_hat_ = opt.delta / 36.0;
        w_ = resolve_witness_bounds(cvs, opt.w_plus_bound, opt.w_minus_bound);
        t_rounds_ = std::max(
            0, static_cast<int>(std::ceil(std::log2(w_.w_plus * w_.w_minus) - 1e-12)));

        // Collect the distinct label keys; measurement outcomes match a label
        // on either value of the C^2 register.
        const ConversionLayout lay = layout_of(cvs);
        for (std::size_t x = 0; x < cvs.size(); ++x) {
            if (cvs.sigma[x].nnz() != 1 ||
                std::abs(std::abs(cvs.sigma[x].entries[0].second) - 1.0) > 1e-9)
                throw std::invalid_argument(
                    "VerifiedEvaluator: sigma states must be basis states");
            const std::uint64_t key = cvs.sigma[x].entries[0].first;
            sigma_key_.push_back(key);
            if (std::find(label_keys_.begin(), label_keys_.end(), key) ==
                label_keys_.end())
                label_keys_.push_back(key);
        }
        for (std::uint64_t key : label_keys_)
            groups_.push_back({lay.t_key(0, key), lay.t_key(1, key)});
    }

    std::uint64_t expected_label(std::size_t x_index) const {
        return sigma_key_[x_index];
    }

    EvaluationResult run(std::size_t x_index, Rng& rng) {
        EvaluationResult res;
        for (int i = 0; i <= t_rounds_; ++i) {
            for (int side = 0; side < 2; ++side) {
                res.ledger.rounds += 1;
                const RoundData& rd = round_data(x_index, side, i);
                res.ledger.add_reflection(rd.spec);
                res.i_stop = i;
                res.used_complement = side == 1;
                const std::size_t outcome = rng.sample_cumulative(rd.cumulative);
                if (outcome < label_keys_.size()) {
                    // A decodable guess costs verification queries; only the
                    // true label passes.
                    res.ledger.add_verifier(opt_.verifier_queries);
                    if (label_keys_[outcome] == sigma_key_[x_index]) {
                        res.label_key = label_keys_[outcome];
                        return res;
                    }
                }
            }
        }
        res.error = true;
        return res;
    }

    int sweep_rounds() const { return t_rounds_; }

  private:
    struct RoundData {
        PhaseCheckSpec spec;
        std::vector<double> cumulative;  // labels..., then everything else
    };

    const RoundData& round_data(std::size_t x_index, int side, int i) {
        const std::uint64_t key =
            (static_cast<std::uint64_t>(x_index) << 16) |
            (static_cast<std::uint64_t>(side) << 15) | static_cast<std::uint64_t>(i);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        const ConvertingVectorSet& prog = side == 0 ? *cvs_ : comp_;
        const double w_minus = side == 0 ? w_.w_minus : w_.w_plus;
        const double alpha = std::ldexp(1.0, i) / w_minus;
        RoundData rd;
        const double theta = std::pow(eps_hat_, 1.5) / std::sqrt(alpha * w_minus);
        rd.spec = make_phase_check_spec(theta, eps_hat_ * eps_hat_);
        const ConversionEngine engine(prog, x_index, alpha, eps_hat_, opt_.backend);
        const std::vector<double> probs = engine.group_probabilities(groups_, rd.spec);
        double acc = 0.0;
        rd.cumulative.reserve(probs.size() + 1);
        for (double p : probs) {
            acc += std::max(0.0, p);
            rd.cumulative.push_back(acc);
        }
        rd.cumulative.push_back(std::max(acc, 1.0));  // all other outcomes
        return cache_.emplace(key, std::move(rd)).first->second;
    }

    const ConvertingVectorSet* cvs_;
    ConvertingVectorSet comp_;
    EvaluationOptions opt_;
    double eps_hat_ = 0.0;
    WitnessSizes w_;
    int t_rounds_ = 0;
    std::vector<std::uint64_t> sigma_key_;   // per domain index
    std::vector<std::uint64_t> label_keys_;  // distinct labels
    std::vector<std::vector<std::uint64_t>> groups_;
    std::unordered_map<std::uint64_t, RoundData> cache_;
};

}  // namespace spansim
