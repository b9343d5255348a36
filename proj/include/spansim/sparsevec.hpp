#pragma once

// Sparse complex vectors keyed by 64-bit indices.
//
// Converting-vector-set vectors for compiled decision trees live in tensor
// spaces whose ambient dimension is astronomically large but whose vectors
// have only a handful of nonzero entries. Entries are kept sorted by index;
// all operations preserve that invariant.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <vector>

#include "spansim/numerics.hpp"

namespace spansim {

struct SparseVec {
    // (index, value) pairs sorted by index; no duplicate indices.
    std::vector<std::pair<std::uint64_t, Complex>> entries;

    bool empty() const { return entries.empty(); }
    std::size_t nnz() const { return entries.size(); }

    void add_term(std::uint64_t index, Complex value) {
        entries.emplace_back(index, value);
    }

    // Sort by index and combine duplicates; drop exact zeros.
    void normalize() {
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::size_t out = 0;
        for (std::size_t i = 0; i < entries.size();) {
            std::uint64_t idx = entries[i].first;
            Complex sum = entries[i].second;
            std::size_t j = i + 1;
            while (j < entries.size() && entries[j].first == idx) sum += entries[j++].second;
            if (sum != Complex(0, 0)) entries[out++] = {idx, sum};
            i = j;
        }
        entries.resize(out);
    }

    SparseVec& operator*=(Complex scale) {
        for (auto& e : entries) e.second *= scale;
        return *this;
    }

    double norm_sq() const {
        double s = 0;
        for (const auto& e : entries) s += std::norm(e.second);
        return s;
    }
};

// <a, b> with the first argument conjugated; entries must be normalized.
inline Complex dot(const SparseVec& a, const SparseVec& b) {
    Complex s(0, 0);
    std::size_t i = 0, j = 0;
    while (i < a.entries.size() && j < b.entries.size()) {
        const std::uint64_t ia = a.entries[i].first, ib = b.entries[j].first;
        if (ia == ib) {
            s += std::conj(a.entries[i].second) * b.entries[j].second;
            ++i, ++j;
        } else if (ia < ib) {
            ++i;
        } else {
            ++j;
        }
    }
    return s;
}

inline SparseVec axpy(Complex alpha, const SparseVec& x, const SparseVec& y) {
    SparseVec out;
    out.entries.reserve(x.nnz() + y.nnz());
    for (const auto& e : x.entries) out.add_term(e.first, alpha * e.second);
    for (const auto& e : y.entries) out.add_term(e.first, e.second);
    out.normalize();
    return out;
}

// Densify into dimension `dim` (indices must be < dim).
inline ComplexVector to_dense(const SparseVec& v, Eigen::Index dim) {
    ComplexVector out = ComplexVector::Zero(dim);
    for (const auto& e : v.entries) out(static_cast<Eigen::Index>(e.first)) += e.second;
    return out;
}

inline SparseVec from_dense(const ComplexVector& v, double drop_tol = 0.0) {
    SparseVec out;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > drop_tol) out.add_term(static_cast<std::uint64_t>(i), v(i));
    out.normalize();
    return out;
}

}  // namespace spansim
