#pragma once

// Span programs over [q]^n and the reflection product driving the decision
// algorithm.
//
// A program is a tuple (H, V, tau, A): the input space H decomposes into
// mutually orthogonal blocks H_1 ... H_n plus H_true and H_false, each H_j
// carrying per-letter subspaces H_{j,a} (possibly overlapping within a block)
// whose union spans H_j. On input x the available subspace is
// H(x) = H_{1,x_1} + ... + H_{n,x_n} + H_true, and x is accepted exactly when
// tau lies in A H(x).
//
// Witness conventions:
//  * positive witness: w in H(x) with A w = tau; size = ||w||^2;
//  * negative witness: row functional omega on V with omega tau = 1 and
//    omega A restricted to H(x) zero; size = ||omega A||^2.
// A well-formed program admits exactly one of the two for every input.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spansim/numerics.hpp"

namespace spansim {

// Inputs are letter strings over [q]; q = 2 strings are also accepted as
// "0"/"1" text at the CLI layer.
using InputWord = std::vector<int>;

struct SpanProgram {
    int n = 0;  // number of input positions
    int q = 2;  // alphabet size
    Eigen::Index dim_h = 0;
    Eigen::Index dim_v = 0;
    // blocks[j][a]: orthonormal basis of H_{j,a} inside the ambient H.
    std::vector<std::vector<SubspaceBasis>> blocks;
    SubspaceBasis h_true;   // always-available part
    SubspaceBasis h_false;  // never-available part
    ComplexMatrix a;        // dim_v x dim_h
    ComplexVector tau;      // dim_v

    // Orthonormal basis of H_j = sum_a H_{j,a}.
    SubspaceBasis block_union(int j) const {
        Eigen::Index cols = 0;
        for (const auto& b : blocks[static_cast<std::size_t>(j)]) cols += b.dim();
        ComplexMatrix stacked(dim_h, cols);
        Eigen::Index at = 0;
        for (const auto& b : blocks[static_cast<std::size_t>(j)]) {
            stacked.middleCols(at, b.dim()) = b.basis;
            at += b.dim();
        }
        return orthonormalize(stacked);
    }

    // Orthonormal basis of H(x) = H_{1,x_1} + ... + H_{n,x_n} + H_true.
    // Blocks of distinct j are orthogonal and only one letter per block is
    // used, so concatenation is already orthonormal.
    SubspaceBasis input_subspace(const InputWord& x) const {
        Eigen::Index cols = h_true.dim();
        for (int j = 0; j < n; ++j)
            cols += blocks[static_cast<std::size_t>(j)][static_cast<std::size_t>(x[static_cast<std::size_t>(j)])].dim();
        ComplexMatrix stacked(dim_h, cols);
        Eigen::Index at = 0;
        for (int j = 0; j < n; ++j) {
            const SubspaceBasis& b =
                blocks[static_cast<std::size_t>(j)][static_cast<std::size_t>(x[static_cast<std::size_t>(j)])];
            stacked.middleCols(at, b.dim()) = b.basis;
            at += b.dim();
        }
        if (h_true.dim() > 0) stacked.middleCols(at, h_true.dim()) = h_true.basis;
        return {stacked};
    }
};

enum class WitnessKind { positive, negative, none, both };

inline const char* to_string(WitnessKind k) {
    switch (k) {
        case WitnessKind::positive: return "positive";
        case WitnessKind::negative: return "negative";
        case WitnessKind::none: return "none";
        case WitnessKind::both: return "both";
    }
    return "?";
}

struct WitnessReport {
    WitnessKind kind = WitnessKind::none;
    double size = 0.0;          // witness size of the reported kind
    ComplexVector witness;      // w in H (positive) / omega^dagger over V (negative)
    bool positive_feasible = false;
    bool negative_feasible = false;
    double positive_size = 0.0;
    double negative_size = 0.0;
    double positive_residual = 0.0;
};

inline constexpr double kWitnessResidualTol = 1e-8;

// Minimum positive witness via min-norm least squares restricted to H(x).
inline std::optional<std::pair<ComplexVector, double>> positive_witness(
    const SpanProgram& p, const InputWord& x) {
    const SubspaceBasis hx = p.input_subspace(x);
    const MinNormSolution sol = min_norm_solution(p.a, p.tau, &hx);
    const double scale = std::max(1.0, p.tau.norm());
    if (sol.residual > kWitnessResidualTol * scale) return std::nullopt;
    return std::make_pair(sol.solution, sol.norm_sq);
}

// Minimum negative witness. Rows omega with omega A Pi_{H(x)} = 0 are
// parameterized by the kernel of (A Pi)^H; minimizing ||omega A||^2 under
// omega tau = 1 is an equality-constrained least-squares problem.
inline std::optional<std::pair<ComplexVector, double>> negative_witness(
    const SpanProgram& p, const InputWord& x) {
    const SubspaceBasis hx = p.input_subspace(x);
    const ComplexMatrix m = p.a * projector_onto(hx);
    const SubspaceBasis k = kernel_basis(ComplexMatrix(m.adjoint()));
    if (k.dim() == 0) return std::nullopt;
    const ComplexMatrix w = p.a.adjoint() * k.basis;     // dim_h x r
    const ComplexVector c = k.basis.adjoint() * p.tau;   // constraint vector
    // omega tau = 1 is only reachable if tau has a genuine component along
    // the feasible rows; c made of rounding noise means "no witness".
    if (c.norm() <= kWitnessResidualTol * std::max(1.0, p.tau.norm()))
        return std::nullopt;
    const ConstrainedRowMin best = constrained_row_min(w, c);
    if (!best.feasible) return std::nullopt;
    // omega as a ket: omega^dagger = K d.
    return std::make_pair(ComplexVector(k.basis * best.d), best.value);
}

inline WitnessReport witness_report(const SpanProgram& p, const InputWord& x) {
    WitnessReport r;
    const SubspaceBasis hx = p.input_subspace(x);
    const MinNormSolution pos = min_norm_solution(p.a, p.tau, &hx);
    r.positive_residual = pos.residual;
    r.positive_feasible = pos.residual <= kWitnessResidualTol * std::max(1.0, p.tau.norm());
    if (r.positive_feasible) r.positive_size = pos.norm_sq;
    const auto neg = negative_witness(p, x);
    r.negative_feasible = neg.has_value();
    if (neg) r.negative_size = neg->second;

    if (r.positive_feasible && !r.negative_feasible) {
        r.kind = WitnessKind::positive;
        r.size = r.positive_size;
        r.witness = pos.solution;
    } else if (!r.positive_feasible && r.negative_feasible) {
        r.kind = WitnessKind::negative;
        r.size = r.negative_size;
        r.witness = neg->first;
    } else if (r.positive_feasible && r.negative_feasible) {
        r.kind = WitnessKind::both;
    } else {
        r.kind = WitnessKind::none;
    }
    return r;
}

// Maximum positive/negative witness sizes over an explicit input domain.
struct MaxWitnesses {
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::vector<WitnessKind> kinds;  // aligned with the domain ordering
};

inline MaxWitnesses max_witnesses(const SpanProgram& p,
                                  const std::vector<InputWord>& domain) {
    MaxWitnesses out;
    out.kinds.reserve(domain.size());
    for (const auto& x : domain) {
        const WitnessReport r = witness_report(p, x);
        if (r.kind == WitnessKind::positive) out.w_plus = std::max(out.w_plus, r.size);
        if (r.kind == WitnessKind::negative) out.w_minus = std::max(out.w_minus, r.size);
        out.kinds.push_back(r.kind);
    }
    return out;
}

// Enumerate [q]^n in lexicographic order (x[0] most significant).
inline std::vector<InputWord> full_domain(int n, int q) {
    std::vector<InputWord> all;
    std::uint64_t total = 1;
    for (int j = 0; j < n; ++j) total *= static_cast<std::uint64_t>(q);
    all.reserve(total);
    InputWord x(static_cast<std::size_t>(n), 0);
    for (std::uint64_t it = 0; it < total; ++it) {
        all.push_back(x);
        for (int j = n - 1; j >= 0; --j) {
            if (++x[static_cast<std::size_t>(j)] < q) break;
            x[static_cast<std::size_t>(j)] = 0;
        }
    }
    return all;
}

// Structural validation: per-letter bases orthonormal, blocks mutually
// orthogonal, and H_1 + ... + H_n + H_true + H_false = H. Returns a message
// for the first violation, or std::nullopt when valid.
inline std::optional<std::string> validate(const SpanProgram& p, double tol = 1e-8) {
    if (p.n <= 0 || p.q < 2) return "n must be >= 1 and q >= 2";
    if (static_cast<int>(p.blocks.size()) != p.n) return "blocks size != n";
    if (p.a.rows() != p.dim_v || p.a.cols() != p.dim_h) return "A has wrong shape";
    if (p.tau.size() != p.dim_v) return "tau has wrong length";

    std::vector<ComplexMatrix> groups;
    for (int j = 0; j < p.n; ++j) {
        if (static_cast<int>(p.blocks[static_cast<std::size_t>(j)].size()) != p.q)
            return "block " + std::to_string(j) + " missing letters";
        for (const auto& b : p.blocks[static_cast<std::size_t>(j)]) {
            if (b.dim() == 0) continue;
            if (b.basis.rows() != p.dim_h) return "basis with wrong ambient dim";
            const ComplexMatrix g = b.basis.adjoint() * b.basis;
            if ((g - ComplexMatrix::Identity(b.dim(), b.dim())).norm() > tol)
                return "letter basis not orthonormal in block " + std::to_string(j);
        }
        groups.push_back(p.block_union(j).basis);
    }
    groups.push_back(p.h_true.basis);
    groups.push_back(p.h_false.basis);

    Eigen::Index total = 0;
    for (const auto& g : groups) total += g.cols();
    for (std::size_t i = 0; i < groups.size(); ++i)
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            if (groups[i].cols() == 0 || groups[j].cols() == 0) continue;
            if ((groups[i].adjoint() * groups[j]).norm() > tol)
                return "blocks " + std::to_string(i) + " and " + std::to_string(j) +
                       " are not orthogonal";
        }
    if (total != p.dim_h) return "block dimensions do not fill H";
    return std::nullopt;
}

// Complement program: decides the negation with positive/negative witness
// sizes exchanged. Construction: per-letter spaces become the orthogonal
// complements within their block, H_true and H_false swap, the new target
// space is V' = H (+) span{|0~>}, tau' = |0~>, and
// A' = |0~><w_0| + Lambda_A with w_0 the minimum-norm solution of A w = tau
// over all of H and Lambda_A the projector onto ker(A).
inline SpanProgram complement(const SpanProgram& p) {
    SpanProgram c;
    c.n = p.n;
    c.q = p.q;
    c.dim_h = p.dim_h;
    c.dim_v = p.dim_h + 1;
    c.blocks.resize(static_cast<std::size_t>(p.n));
    for (int j = 0; j < p.n; ++j) {
        const SubspaceBasis hj = p.block_union(j);
        auto& row = c.blocks[static_cast<std::size_t>(j)];
        row.reserve(static_cast<std::size_t>(p.q));
        for (int a = 0; a < p.q; ++a) {
            const SubspaceBasis& hja = p.blocks[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
            if (hj.dim() == 0) {
                row.push_back(SubspaceBasis{ComplexMatrix(p.dim_h, 0)});
                continue;
            }
            // Vectors B_j c orthogonal to H_{j,a}: kernel of B_{j,a}^H B_j.
            const SubspaceBasis coeff =
                kernel_basis(ComplexMatrix(hja.basis.adjoint() * hj.basis));
            row.push_back(SubspaceBasis{ComplexMatrix(hj.basis * coeff.basis)});
        }
    }
    c.h_true = p.h_false;
    c.h_false = p.h_true;

    const MinNormSolution w0 = min_norm_solution(p.a, p.tau);
    if (w0.residual > kWitnessResidualTol * std::max(1.0, p.tau.norm()))
        throw std::runtime_error("complement: tau is not in the range of A");
    c.a = ComplexMatrix(c.dim_v, c.dim_h);
    c.a.topRows(p.dim_h) = kernel_projector(p.a);
    c.a.row(p.dim_h) = w0.solution.adjoint();
    c.tau = ComplexVector::Zero(c.dim_v);
    c.tau(p.dim_h) = Complex(1, 0);
    return c;
}

// Extended program used by the decision algorithm: the ambient space gains a
// coordinate |0^> (index dim_h), the map becomes A~ = [A | tau/alpha], and
// the walk unitary on input x is U = (2 Pi_x - I)(2 Lambda - I) with Lambda
// the projector onto ker(A~) and Pi_x onto H(x) (+) span{|0^>}.
struct ExtendedProgram {
    const SpanProgram* program = nullptr;
    double alpha = 1.0;
    ComplexMatrix a_ext;   // dim_v x (dim_h + 1)
    ComplexMatrix lambda;  // (dim_h+1) x (dim_h+1) kernel projector

    Eigen::Index dim() const { return a_ext.cols(); }

    // |0^>, the initial state of every phase check.
    ComplexVector hat_zero() const {
        ComplexVector v = ComplexVector::Zero(dim());
        v(dim() - 1) = Complex(1, 0);
        return v;
    }

    ComplexMatrix input_projector(const InputWord& x) const {
        const SubspaceBasis hx = program->input_subspace(x);
        ComplexMatrix pi = ComplexMatrix::Zero(dim(), dim());
        pi.topLeftCorner(program->dim_h, program->dim_h) = projector_onto(hx);
        pi(dim() - 1, dim() - 1) = Complex(1, 0);
        return pi;
    }

    ComplexMatrix unitary(const InputWord& x) const {
        const Eigen::Index d = dim();
        const ComplexMatrix refl_pi =
            2.0 * input_projector(x) - ComplexMatrix::Identity(d, d);
        const ComplexMatrix refl_lambda = 2.0 * lambda - ComplexMatrix::Identity(d, d);
        return refl_pi * refl_lambda;
    }
};

inline ExtendedProgram extend_program(const SpanProgram& p, double alpha) {
    if (!(alpha > 0)) throw std::invalid_argument("extend_program: alpha must be positive");
    ExtendedProgram e;
    e.program = &p;
    e.alpha = alpha;
    e.a_ext = ComplexMatrix(p.dim_v, p.dim_h + 1);
    e.a_ext.leftCols(p.dim_h) = p.a;
    e.a_ext.col(p.dim_h) = p.tau / alpha;
    e.lambda = kernel_projector(e.a_ext);
    return e;
}

// Convenience wrapper: the full walk unitary for (P, x, alpha).
inline ComplexMatrix algorithm_unitary(const SpanProgram& p, const InputWord& x,
                                       double alpha) {
    return extend_program(p, alpha).unitary(x);
}

}  // namespace spansim
