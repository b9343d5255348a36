#pragma once

// Brute-force reference implementation of parallel phase estimation used as
// an oracle by tests and invariant checks: the full circuit (Hadamards,
// controlled walk powers, inverse Fourier transforms) is materialized on the
// register (x) system tensor space of dimension 2^{t m} * d. Everything here
// is exponential and meant for d * 2^{tm} up to a few thousand.

#include <cstdint>

#include "spansim/numerics.hpp"

namespace spansim::circuit_ref {

// F^{-1} on one t-bit register: entries 2^{-t/2} e^{-2 pi i jk / 2^t}.
inline ComplexMatrix inverse_fourier(int t) {
    const Eigen::Index n = Eigen::Index{1} << t;
    ComplexMatrix f(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k)
            f(j, k) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                                 -2.0 * kPi * static_cast<double>(j) *
                                     static_cast<double>(k) / static_cast<double>(n));
    return f;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Full estimation circuit C on (m registers of t bits) (x) system, with the
// register index varying slowest. Register value r = (i_1 .. i_m) in base 2^t
// applies U^{i_1 + ... + i_m} to the system.
inline ComplexMatrix estimation_circuit(const ComplexMatrix& u, int t, int m) {
    const Eigen::Index d = u.rows();
    const Eigen::Index regs = Eigen::Index{1} << (t * m);
    const Eigen::Index total = regs * d;

    // Hadamard layer on all t*m qubits.
    ComplexMatrix had(regs, regs);
    const double scale = std::pow(2.0, -0.5 * t * m);
    for (Eigen::Index r = 0; r < regs; ++r)
        for (Eigen::Index s = 0; s < regs; ++s)
            had(r, s) = scale * ((__builtin_popcountll(static_cast<unsigned long long>(r & s)) & 1)
                                     ? -1.0
                                     : 1.0);

    // Controlled powers, block diagonal over the register value.
    const Eigen::Index grid = Eigen::Index{1} << t;
    std::vector<ComplexMatrix> u_pow(static_cast<std::size_t>(m) * (grid - 1) + 1);
    u_pow[0] = ComplexMatrix::Identity(d, d);
    for (std::size_t p = 1; p < u_pow.size(); ++p) u_pow[p] = u_pow[p - 1] * u;

    ComplexMatrix circ = ComplexMatrix::Zero(total, total);
    for (Eigen::Index r = 0; r < regs; ++r) {
        Eigen::Index power = 0;
        Eigen::Index rest = r;
        for (int c = 0; c < m; ++c) {
            power += rest % grid;
            rest /= grid;
        }
        circ.block(r * d, r * d, d, d) = u_pow[static_cast<std::size_t>(power)];
    }

    ComplexMatrix pre = kron(had, ComplexMatrix::Identity(d, d));
    ComplexMatrix ft = inverse_fourier(t);
    ComplexMatrix ft_all = ComplexMatrix::Identity(1, 1);
    for (int c = 0; c < m; ++c) ft_all = kron(ft_all, ft);
    ComplexMatrix post = kron(ft_all, ComplexMatrix::Identity(d, d));
    return post * circ * pre;
}

// Probability that all t*m register bits read zero when the circuit is run on
// |0_B>|psi>.
inline double circuit_check_probability(const ComplexMatrix& u, const ComplexVector& psi,
                                        int t, int m) {
    const Eigen::Index d = u.rows();
    const ComplexMatrix c = estimation_circuit(u, t, m);
    ComplexVector in = ComplexVector::Zero(c.rows());
    in.head(d) = psi;  // register value 0 occupies the first block
    const ComplexVector out = c * in;
    return out.head(d).squaredNorm();
}

// Full reflection R = C^H (2|0_B><0_B| - I) C as a dense matrix.
inline ComplexMatrix reflection_circuit(const ComplexMatrix& u, int t, int m) {
    const Eigen::Index d = u.rows();
    const ComplexMatrix c = estimation_circuit(u, t, m);
    ComplexMatrix mid = -ComplexMatrix::Identity(c.rows(), c.rows());
    for (Eigen::Index i = 0; i < d; ++i) mid(i, i) = Complex(1, 0);
    return c.adjoint() * mid * c;
}

}  // namespace spansim::circuit_ref
