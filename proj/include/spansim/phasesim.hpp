#pragma once

// Parallel phase estimation, phase checking and phase reflection, simulated
// exactly in the eigenbasis of the walk unitary.
//
// Phase checking with t phase bits and m parallel copies applies, per copy,
// controlled powers U^1, U^2, ..., U^{2^{t-1}} (2^t - 1 applications of U in
// total) and accepts when every phase register reads zero. On an eigenvector
// with phase theta the per-copy acceptance amplitude is the Dirichlet kernel
//
//   a(theta) = 2^{-t} sum_{i=0}^{2^t-1} e^{i i theta},
//
// so an initial state sum_k c_k |u_k> accepts with probability
// sum_k |c_k|^2 |a(theta_k)|^{2m}. Phase reflection conjugates the
// reflection about the all-zero phase registers by the estimation circuit;
// on |u_k>|0_B> it produces |u_k> (2 a_k^m |d_k> - |0_B>) with
// <d_k|d_j> = a(theta_k - theta_j)^m and <0_B|d_k> = conj(a_k)^m. All
// quantities below are these closed forms; no 2^{tm}-dimensional register is
// ever materialized.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spansim/numerics.hpp"
#include "spansim/rng.hpp"

namespace spansim {

// Discretization of a (precision Theta, accuracy eps) phase check.
struct PhaseCheckSpec {
    int t = 1;           // phase bits per copy
    int m = 1;           // parallel copies
    double theta = 0.0;  // requested precision
    double eps = 0.0;    // requested accuracy

    std::uint64_t grid() const { return std::uint64_t{1} << t; }

    // Applications of the walk unitary in one phase check.
    std::uint64_t u_applications_per_check() const {
        return static_cast<std::uint64_t>(m) * (grid() - 1);
    }
    // Each application of the walk unitary costs two oracle queries.
    std::uint64_t queries_per_check() const { return 2 * u_applications_per_check(); }
    // Phase reflection runs the estimation circuit forward and backward.
    std::uint64_t queries_per_reflection() const { return 2 * queries_per_check(); }
};

// Smallest (t, m) meeting the contract: phases of magnitude > Theta leak at
// most eps through the check, and the reflection moves zero-phase vectors by
// at most eps. t = ceil(log2(2 pi / Theta)) makes |a(theta)| <= 1/2 for all
// |theta| > Theta, so m = ceil(log2(1/eps)) + 1 copies push the leakage to
// 4^{-m} <= eps^2/4 and the reflection residual to 2 * 2^{-m} <= eps.
inline PhaseCheckSpec make_phase_check_spec(double theta, double eps) {
    if (!(theta > 0) || !(eps > 0))
        throw std::invalid_argument("make_phase_check_spec: theta and eps must be positive");
    PhaseCheckSpec s;
    s.theta = theta;
    s.eps = eps;
    const double t_raw = std::ceil(std::log2(2.0 * kPi / theta));
    s.t = std::max(1, static_cast<int>(t_raw));
    if (s.t > 62) throw std::invalid_argument("make_phase_check_spec: precision too fine");
    const double m_raw = std::ceil(std::log2(1.0 / eps)) + 1.0;
    s.m = std::max(1, static_cast<int>(m_raw));
    return s;
}

// Dirichlet kernel a(theta) = 2^{-t} sum_{i<2^t} e^{i i theta}.
inline Complex kernel_amplitude(double theta, int t) {
    const double n = std::ldexp(1.0, t);  // 2^t
    const double half = 0.5 * theta;
    const double s = std::sin(half);
    const Complex twist = std::polar(1.0, (n - 1.0) * half);
    if (std::abs(s) < 1e-15) return twist;  // theta ~ 0 (phases live in (-pi, pi])
    return twist * (std::sin(n * half) / (n * s));
}

// a(theta)^m without forming intermediate powers.
inline Complex kernel_amplitude_pow(double theta, int t, int m) {
    const Complex a = kernel_amplitude(theta, t);
    const double r = std::abs(a);
    if (r == 0.0) return Complex(0, 0);
    return std::polar(std::pow(r, m), std::arg(a) * m);
}

// |a(theta)|^{2m}: per-eigenvector acceptance probability of the check.
inline double kernel_accept_probability(double theta, const PhaseCheckSpec& spec) {
    const double r = std::abs(kernel_amplitude(theta, spec.t));
    return std::pow(r, 2 * spec.m);
}

// Acceptance probability of the check on an initial state given the
// eigensystem of the walk unitary.
inline double check_probability(const EigenSystem& sys, const ComplexVector& initial,
                                const PhaseCheckSpec& spec) {
    const ComplexVector c = sys.vectors.adjoint() * initial;
    double p = 0.0;
    for (Eigen::Index k = 0; k < c.size(); ++k)
        p += std::norm(c(k)) *
             kernel_accept_probability(sys.phases[static_cast<std::size_t>(k)], spec);
    return p;
}

// One simulated run of the check: accept with the exact probability.
inline bool sample_phase_check(const EigenSystem& sys, const ComplexVector& initial,
                               const PhaseCheckSpec& spec, Rng& rng) {
    return rng.bernoulli(check_probability(sys, initial, spec));
}

// <0_B|chi_k> = 2 |a_k|^{2m} - 1: overlap of the reflected register state
// with the untouched ancilla.
inline double chi_zero_overlap(double theta, const PhaseCheckSpec& spec) {
    return 2.0 * kernel_accept_probability(theta, spec) - 1.0;
}

// Gram matrix of the reflected ancilla states chi_k = 2 a_k^m d_k - |0_B>:
// <chi_k|chi_j> = 4 conj(a_k^m) a_j^m a(theta_k - theta_j)^m
//                 - 2|a_k|^{2m} - 2|a_j|^{2m} + 1.
inline ComplexMatrix chi_gram(const std::vector<double>& phases,
                              const PhaseCheckSpec& spec) {
    const std::size_t d = phases.size();
    std::vector<Complex> am(d);
    std::vector<double> acc(d);
    for (std::size_t k = 0; k < d; ++k) {
        am[k] = kernel_amplitude_pow(phases[k], spec.t, spec.m);
        acc[k] = std::norm(am[k]);
    }
    ComplexMatrix g(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = k; j < d; ++j) {
            const Complex cross =
                kernel_amplitude_pow(phases[k] - phases[j], spec.t, spec.m);
            const Complex val =
                4.0 * std::conj(am[k]) * am[j] * cross - 2.0 * acc[k] - 2.0 * acc[j] + 1.0;
            g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = val;
            g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = std::conj(val);
        }
    }
    return g;
}

// Fidelity <target, 0_B| R |initial, 0_B> of the reflection output with a
// target system state: sum_k c_k <target|u_k> (2|a_k|^{2m} - 1).
inline Complex reflection_target_overlap(const EigenSystem& sys,
                                         const ComplexVector& initial,
                                         const ComplexVector& target,
                                         const PhaseCheckSpec& spec) {
    const ComplexVector c = sys.vectors.adjoint() * initial;
    const ComplexVector tt = sys.vectors.adjoint() * target;
    Complex f(0, 0);
    for (Eigen::Index k = 0; k < c.size(); ++k)
        f += std::conj(tt(k)) * c(k) *
             chi_zero_overlap(sys.phases[static_cast<std::size_t>(k)], spec);
    return f;
}

// || R |initial, 0_B> - |target, 0_B> || for normalized states.
inline double reflection_distance(const EigenSystem& sys, const ComplexVector& initial,
                                  const ComplexVector& target,
                                  const PhaseCheckSpec& spec) {
    const Complex f = reflection_target_overlap(sys, initial, target, spec);
    return std::sqrt(std::max(0.0, 2.0 - 2.0 * f.real()));
}

// Probability of each standard-basis outcome on the system register after
// phase reflection (ancilla traced out):
//   p(a) = sum_{k,j} conj(c_k) c_j <u_k|a><a|u_j> <chi_k|chi_j>.
inline RealVector reflection_measurement_distribution(const EigenSystem& sys,
                                                      const ComplexVector& initial,
                                                      const PhaseCheckSpec& spec) {
    const Eigen::Index d = sys.vectors.rows();
    const ComplexVector c = sys.vectors.adjoint() * initial;
    const ComplexMatrix g = chi_gram(sys.phases, spec);
    // B_{kj} = conj(c_k) c_j <chi_k|chi_j>; p(a) = row_a(V)* B row_a(V)^T.
    ComplexMatrix b = g;
    for (Eigen::Index k = 0; k < c.size(); ++k)
        for (Eigen::Index j = 0; j < c.size(); ++j)
            b(k, j) *= std::conj(c(k)) * c(j);
    RealVector p(d);
    for (Eigen::Index a = 0; a < d; ++a) {
        const ComplexVector row = sys.vectors.row(a).transpose();  // w_k(a) = <a|u_k>
        p(a) = std::max(0.0, (row.adjoint() * (b * row)).value().real());
    }
    return p;
}

// Oracle-query bookkeeping shared by the decision and conversion algorithms.
struct QueryLedger {
    std::uint64_t oracle_queries = 0;
    std::uint64_t u_applications = 0;
    std::uint64_t phase_checks = 0;
    std::uint64_t phase_reflections = 0;
    std::uint64_t estimation_calls = 0;
    std::uint64_t verifier_queries = 0;
    std::uint64_t rounds = 0;

    void add_check(const PhaseCheckSpec& spec, std::uint64_t count = 1) {
        phase_checks += count;
        u_applications += count * spec.u_applications_per_check();
        oracle_queries += count * spec.queries_per_check();
    }
    void add_reflection(const PhaseCheckSpec& spec, std::uint64_t count = 1) {
        phase_reflections += count;
        u_applications += count * 2 * spec.u_applications_per_check();
        oracle_queries += count * spec.queries_per_reflection();
    }
    void add_verifier(std::uint64_t queries) {
        verifier_queries += queries;
        oracle_queries += queries;
    }
    void merge(const QueryLedger& other) {
        oracle_queries += other.oracle_queries;
        u_applications += other.u_applications;
        phase_checks += other.phase_checks;
        phase_reflections += other.phase_reflections;
        estimation_calls += other.estimation_calls;
        verifier_queries += other.verifier_queries;
        rounds += other.rounds;
    }
};

}  // namespace spansim
