#pragma once

// Problem builders on top of the span-program and state-conversion cores:
//  * the OR (unstructured search) span program,
//  * undirected st-connectivity from a graph's signed incidence map,
//  * weighted decision trees compiled into converting vector sets,
//  * the in-order search trees for the "find both ones" / "find the first
//    one" tasks, with closed-form witness sizes,
//  * the power-law advice distributions driving the average-case separation
//    experiments, with exact classical in-order query costs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spansim/convert.hpp"
#include "spansim/numerics.hpp"
#include "spansim/rng.hpp"
#include "spansim/spanprog.hpp"
#include "spansim/sparsevec.hpp"

namespace spansim {

// ------------------------------------------------------------------
// OR_n: accept iff some position reads 1. One dimension per position,
// available exactly when that bit is 1, all mapped to the target scalar.
// Minimum positive witness spreads over the M marked positions (w+ = 1/M);
// the all-zeros input has the unit functional as negative witness (w- = n).
// ------------------------------------------------------------------
inline SpanProgram build_or_program(int n) {
    if (n < 1) throw std::invalid_argument("build_or_program: n must be >= 1");
    SpanProgram p;
    p.n = n;
    p.q = 2;
    p.dim_h = n;
    p.dim_v = 1;
    p.blocks.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        SubspaceBasis off;
        off.basis = ComplexMatrix::Zero(n, 0);
        SubspaceBasis on;
        on.basis = ComplexMatrix::Zero(n, 1);
        on.basis(j, 0) = 1.0;
        p.blocks[static_cast<std::size_t>(j)] = {off, on};
    }
    p.h_true.basis = ComplexMatrix::Zero(n, 0);
    p.h_false.basis = ComplexMatrix::Zero(n, 0);
    p.a = ComplexMatrix::Ones(1, n);
    p.tau = ComplexVector::Ones(1);
    return p;
}

// ------------------------------------------------------------------
// Graphs and st-connectivity.
// ------------------------------------------------------------------
struct Graph {
    int vertices = 0;
    int s = 0;
    int t = 0;
    // Candidate edges with a fixed orientation; the input word selects which
    // are present. Parallel edges are allowed (distinct indices).
    std::vector<std::pair<int, int>> edges;
};

inline std::optional<std::string> validate_graph(const Graph& g) {
    if (g.vertices < 2) return "graph needs at least two vertices";
    if (g.s < 0 || g.s >= g.vertices || g.t < 0 || g.t >= g.vertices)
        return "s or t out of range";
    if (g.s == g.t) return "s and t must differ";
    for (const auto& e : g.edges) {
        if (e.first < 0 || e.first >= g.vertices || e.second < 0 ||
            e.second >= g.vertices)
            return "edge endpoint out of range";
        if (e.first == e.second) return "self-loops are not allowed";
    }
    return std::nullopt;
}

// Text format: integers separated by whitespace, '#' starts a comment.
// First three values are "vertices s t", then one "u v" pair per edge.
inline Graph parse_graph(std::istream& in) {
    std::vector<long long> tokens;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            long long value = 0;
            try {
                value = std::stoll(tok, &used);
            } catch (const std::exception&) {
                throw std::runtime_error("parse_graph: bad token '" + tok + "'");
            }
            if (used != tok.size())
                throw std::runtime_error("parse_graph: bad token '" + tok + "'");
            tokens.push_back(value);
        }
    }
    if (tokens.size() < 3) throw std::runtime_error("parse_graph: missing 'vertices s t' header");
    if ((tokens.size() - 3) % 2 != 0)
        throw std::runtime_error("parse_graph: dangling edge endpoint");
    Graph g;
    g.vertices = static_cast<int>(tokens[0]);
    g.s = static_cast<int>(tokens[1]);
    g.t = static_cast<int>(tokens[2]);
    for (std::size_t i = 3; i + 1 < tokens.size(); i += 2)
        g.edges.emplace_back(static_cast<int>(tokens[i]), static_cast<int>(tokens[i + 1]));
    if (const auto err = validate_graph(g)) throw std::runtime_error("parse_graph: " + *err);
    return g;
}

inline Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_graph: cannot open " + path);
    return parse_graph(in);
}

// One basis vector per candidate edge, available when the edge is present;
// the edge (u, v) maps to e_u - e_v and the target is e_s - e_t. The minimum
// positive witness is the unit electrical flow, so w+ equals the effective
// resistance between s and t in the present-edge subgraph.
inline SpanProgram build_st_connectivity(const Graph& g) {
    if (const auto err = validate_graph(g))
        throw std::invalid_argument("build_st_connectivity: " + *err);
    const int m = static_cast<int>(g.edges.size());
    if (m < 1) throw std::invalid_argument("build_st_connectivity: need at least one edge");
    SpanProgram p;
    p.n = m;
    p.q = 2;
    p.dim_h = m;
    p.dim_v = g.vertices;
    p.blocks.resize(static_cast<std::size_t>(m));
    p.a = ComplexMatrix::Zero(g.vertices, m);
    for (int j = 0; j < m; ++j) {
        SubspaceBasis off;
        off.basis = ComplexMatrix::Zero(m, 0);
        SubspaceBasis on;
        on.basis = ComplexMatrix::Zero(m, 1);
        on.basis(j, 0) = 1.0;
        p.blocks[static_cast<std::size_t>(j)] = {off, on};
        p.a(g.edges[static_cast<std::size_t>(j)].first, j) = 1.0;
        p.a(g.edges[static_cast<std::size_t>(j)].second, j) = -1.0;
    }
    p.h_true.basis = ComplexMatrix::Zero(m, 0);
    p.h_false.basis = ComplexMatrix::Zero(m, 0);
    p.tau = ComplexVector::Zero(g.vertices);
    p.tau(g.s) = 1.0;
    p.tau(g.t) = -1.0;
    return p;
}

// Reference value via the graph Laplacian pseudoinverse: R_{s,t} of the
// subgraph of present edges (x_j = 1), infinity when s and t are not
// connected there.
inline double effective_resistance(const Graph& g, const InputWord& x) {
    if (const auto err = validate_graph(g))
        throw std::invalid_argument("effective_resistance: " + *err);
    if (x.size() != g.edges.size())
        throw std::invalid_argument("effective_resistance: input length mismatch");

    std::vector<int> parent(static_cast<std::size_t>(g.vertices));
    for (int i = 0; i < g.vertices; ++i) parent[static_cast<std::size_t>(i)] = i;
    const auto find = [&parent](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (std::size_t j = 0; j < g.edges.size(); ++j)
        if (x[j] == 1) parent[static_cast<std::size_t>(find(g.edges[j].first))] = find(g.edges[j].second);
    if (find(g.s) != find(g.t)) return std::numeric_limits<double>::infinity();

    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.vertices, g.vertices);
    for (std::size_t j = 0; j < g.edges.size(); ++j) {
        if (x[j] != 1) continue;
        const int u = g.edges[j].first;
        const int v = g.edges[j].second;
        lap(u, u) += 1.0;
        lap(v, v) += 1.0;
        lap(u, v) -= 1.0;
        lap(v, u) -= 1.0;
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(g.vertices);
    b(g.s) = 1.0;
    b(g.t) = -1.0;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
    const double cutoff = 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    double r = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double lambda = es.eigenvalues()(i);
        if (lambda > cutoff) {
            const double c = es.eigenvectors().col(i).dot(b);
            r += c * c / lambda;
        }
    }
    return r;
}

// ------------------------------------------------------------------
// Weighted decision trees. Each non-leaf vertex queries one input position;
// its outgoing edges carry disjoint letter sets covering the alphabet,
// exactly one edge is black and the rest are red, and same-colored edges
// from a vertex share their weight. No position is queried twice along any
// root-to-leaf path. Leaves may be labeled with an answer in [m]; label -1
// marks a leaf no domain input is expected to reach.
// ------------------------------------------------------------------
inline constexpr int kBlack = 0;
inline constexpr int kRed = 1;
inline constexpr double kInfiniteWeight = std::numeric_limits<double>::infinity();

struct TreeEdge {
    int to = -1;
    int color = kBlack;
    double weight = 1.0;       // red weights may be infinite
    std::vector<int> letters;  // subset of [q] read along this edge
};

struct DecisionTree {
    int n = 0;
    int q = 2;
    int root = 0;
    std::vector<int> query;  // per vertex; -1 at leaves
    std::vector<int> label;  // per vertex; answer at labeled leaves, else -1
    std::vector<std::vector<TreeEdge>> edges;

    int vertex_count() const { return static_cast<int>(edges.size()); }
    bool is_leaf(int v) const { return edges[static_cast<std::size_t>(v)].empty(); }
    int label_count() const {
        int m = 0;
        for (const int l : label) m = std::max(m, l + 1);
        return m;
    }
};

inline std::optional<std::string> validate_tree(const DecisionTree& t) {
    const std::size_t nv = t.edges.size();
    if (nv == 0) return "tree has no vertices";
    if (t.query.size() != nv || t.label.size() != nv)
        return "per-vertex arrays disagree in length";
    if (t.n < 1) return "n must be >= 1";
    if (t.q < 2) return "q must be >= 2";
    if (t.root < 0 || t.root >= static_cast<int>(nv)) return "root out of range";

    std::vector<int> indegree(nv, 0);
    for (std::size_t v = 0; v < nv; ++v)
        for (const TreeEdge& e : t.edges[v]) {
            if (e.to < 0 || e.to >= static_cast<int>(nv)) return "edge target out of range";
            indegree[static_cast<std::size_t>(e.to)] += 1;
        }
    if (indegree[static_cast<std::size_t>(t.root)] != 0) return "root has an incoming edge";
    for (std::size_t v = 0; v < nv; ++v)
        if (static_cast<int>(v) != t.root && indegree[v] != 1)
            return "every non-root vertex needs exactly one incoming edge";

    for (std::size_t v = 0; v < nv; ++v) {
        if (t.edges[v].empty()) {
            if (t.query[v] != -1) return "leaf with a query index";
            if (t.label[v] < -1) return "label out of range";
            continue;
        }
        if (t.label[v] != -1) return "internal vertex with a label";
        if (t.query[v] < 0 || t.query[v] >= t.n) return "query index out of range";
        std::vector<int> covered(static_cast<std::size_t>(t.q), 0);
        int black_edges = 0;
        double black_weight = -1.0;
        double red_weight = -1.0;
        for (const TreeEdge& e : t.edges[v]) {
            if (e.letters.empty()) return "edge with an empty letter set";
            for (const int a : e.letters) {
                if (a < 0 || a >= t.q) return "letter out of range";
                if (covered[static_cast<std::size_t>(a)]++) return "letter covered twice";
            }
            if (e.color != kBlack && e.color != kRed) return "unknown edge color";
            if (!(e.weight > 0)) return "edge weight must be positive";
            if (e.color == kBlack) {
                black_edges += 1;
                if (std::isinf(e.weight)) return "black edge with infinite weight";
                if (black_weight < 0)
                    black_weight = e.weight;
                else if (black_weight != e.weight)
                    return "black edges from one vertex must share their weight";
            } else {
                if (red_weight < 0)
                    red_weight = e.weight;
                else if (red_weight != e.weight)
                    return "red edges from one vertex must share their weight";
            }
        }
        for (int a = 0; a < t.q; ++a)
            if (!covered[static_cast<std::size_t>(a)]) return "letters do not cover the alphabet";
        if (black_edges != 1) return "each internal vertex needs exactly one black edge";
    }

    // No position queried twice on any root-to-leaf path (iterative DFS with
    // a use counter per position).
    std::vector<int> used(static_cast<std::size_t>(t.n), 0);
    std::vector<std::pair<int, std::size_t>> stack;  // (vertex, next edge index)
    stack.emplace_back(t.root, 0);
    if (!t.is_leaf(t.root)) used[static_cast<std::size_t>(t.query[static_cast<std::size_t>(t.root)])] += 1;
    while (!stack.empty()) {
        auto& [v, next] = stack.back();
        const auto& out = t.edges[static_cast<std::size_t>(v)];
        if (next >= out.size()) {
            if (!t.is_leaf(v)) used[static_cast<std::size_t>(t.query[static_cast<std::size_t>(v)])] -= 1;
            stack.pop_back();
            continue;
        }
        const int child = out[next].to;
        next += 1;
        if (t.is_leaf(child)) continue;
        const int j = t.query[static_cast<std::size_t>(child)];
        if (used[static_cast<std::size_t>(j)]) return "position queried twice on a path";
        used[static_cast<std::size_t>(j)] += 1;
        stack.emplace_back(child, 0);
    }
    return std::nullopt;
}

struct TreePathStep {
    int vertex = 0;
    std::size_t edge_index = 0;
};

// Root-to-leaf walk for one input: at each internal vertex follow the edge
// whose letter set contains the read letter.
inline std::vector<TreePathStep> tree_path(const DecisionTree& t, const InputWord& x) {
    if (static_cast<int>(x.size()) != t.n)
        throw std::invalid_argument("tree_path: input length mismatch");
    std::vector<TreePathStep> steps;
    int v = t.root;
    while (!t.is_leaf(v)) {
        const int j = t.query[static_cast<std::size_t>(v)];
        const int a = x[static_cast<std::size_t>(j)];
        if (a < 0 || a >= t.q) throw std::invalid_argument("tree_path: letter out of range");
        const auto& out = t.edges[static_cast<std::size_t>(v)];
        std::size_t pick = out.size();
        for (std::size_t e = 0; e < out.size(); ++e)
            if (std::find(out[e].letters.begin(), out[e].letters.end(), a) !=
                out[e].letters.end()) {
                pick = e;
                break;
            }
        if (pick == out.size()) throw std::invalid_argument("tree_path: letter not covered");
        steps.push_back({v, pick});
        v = out[pick].to;
    }
    return steps;
}

inline int tree_terminal_vertex(const DecisionTree& t, const InputWord& x) {
    const std::vector<TreePathStep> steps = tree_path(t, x);
    if (steps.empty()) return t.root;
    const TreePathStep& last = steps.back();
    return t.edges[static_cast<std::size_t>(last.vertex)][last.edge_index].to;
}

inline int tree_leaf_label(const DecisionTree& t, const InputWord& x) {
    return t.label[static_cast<std::size_t>(tree_terminal_vertex(t, x))];
}

// Largest number of red edges on any root-to-leaf path.
inline int max_red_on_path(const DecisionTree& t) {
    int best = 0;
    std::vector<std::pair<int, std::size_t>> stack;
    std::vector<int> reds;
    stack.emplace_back(t.root, 0);
    reds.push_back(0);
    while (!stack.empty()) {
        auto& [v, next] = stack.back();
        const auto& out = t.edges[static_cast<std::size_t>(v)];
        if (t.is_leaf(v) || next >= out.size()) {
            best = std::max(best, reds.back());
            stack.pop_back();
            reds.pop_back();
            continue;
        }
        const TreeEdge& e = out[next];
        next += 1;
        stack.emplace_back(e.to, 0);
        reds.push_back(reds[reds.size() - 1] + (e.color == kRed ? 1 : 0));
    }
    return best;
}

// Canonical weight assignment: every black edge gets the constant G (the
// maximum number of red edges on any root-to-leaf path, at least 1), and a
// red edge at depth d (edges from the root, inclusive) gets weight d.
inline DecisionTree assign_canonical_weights(DecisionTree t) {
    if (const auto err = validate_tree(t))
        throw std::invalid_argument("assign_canonical_weights: " + *err);
    const double g = std::max(1, max_red_on_path(t));
    std::vector<std::pair<int, int>> stack;  // (vertex, depth in edges)
    stack.emplace_back(t.root, 0);
    while (!stack.empty()) {
        const auto [v, depth] = stack.back();
        stack.pop_back();
        for (TreeEdge& e : t.edges[static_cast<std::size_t>(v)]) {
            e.weight = e.color == kRed ? static_cast<double>(depth + 1) : g;
            stack.emplace_back(e.to, depth + 1);
        }
    }
    return t;
}

// Closed-form witness-size bounds read off the weighted tree: the compiled
// vector set attains both with equality.
struct TreeWitnessBounds {
    double plus = 0.0;
    double minus = 0.0;
};

namespace detail {

// One taken edge of a root-to-leaf walk, with the per-vertex color weights
// needed by the compiled vectors.
struct TreePathEdge {
    std::uint64_t vertex = 0;
    std::uint64_t child = 0;
    int query = 0;
    int color = kBlack;
    double taken_weight = 1.0;
    double red_weight = kInfiniteWeight;  // weight of red edges at this vertex
    double black_weight = 1.0;            // weight of the black edge
};

inline TreeWitnessBounds path_bounds(const std::vector<TreePathEdge>& path) {
    TreeWitnessBounds b;
    for (const TreePathEdge& e : path) {
        b.plus += 4.0 * e.taken_weight;
        if (!std::isinf(e.red_weight)) b.minus += 4.0 / e.red_weight;
        if (e.color == kRed) b.minus += 4.0 / e.black_weight;
    }
    return b;
}

inline std::vector<TreePathEdge> tree_path_edges(const DecisionTree& t,
                                                 const InputWord& x) {
    std::vector<TreePathEdge> out;
    for (const TreePathStep& step : tree_path(t, x)) {
        const auto& edges = t.edges[static_cast<std::size_t>(step.vertex)];
        const TreeEdge& taken = edges[step.edge_index];
        TreePathEdge pe;
        pe.vertex = static_cast<std::uint64_t>(step.vertex);
        pe.child = static_cast<std::uint64_t>(taken.to);
        pe.query = t.query[static_cast<std::size_t>(step.vertex)];
        pe.color = taken.color;
        pe.taken_weight = taken.weight;
        for (const TreeEdge& e : edges) {
            if (e.color == kRed) pe.red_weight = e.weight;
            if (e.color == kBlack) pe.black_weight = e.weight;
        }
        out.push_back(pe);
    }
    return out;
}

inline std::uint64_t tree_raw_key(std::uint64_t vcap, std::uint64_t mcap,
                                  std::uint64_t vertex, int color,
                                  std::uint64_t third, std::uint64_t fourth) {
    return ((vertex * 2 + static_cast<std::uint64_t>(color)) * (vcap + 1) + third) *
               (mcap + 1) +
           fourth;
}

// Compile per-input root-to-leaf walks into converting vectors. The ambient
// vector space is C^{vertices} (x) C^2 (x) C^{1+vertices} (x) C^{1+labels};
// the last two registers hold the rank-2 gadget pairs e_0 + e_i (for v and
// its label sign-flipped to e_0 - e_i for u), so <mu_i|nu_j> = 1 - delta.
// Only keys actually used are materialized, via dense renumbering.
inline ConvertingVectorSet cvs_from_tree_paths(
    int n, int q, std::uint64_t vcap, std::uint64_t mcap,
    const std::vector<InputWord>& domain, const std::vector<int>& labels,
    const std::vector<std::vector<TreePathEdge>>& paths) {
    ConvertingVectorSet cvs;
    cvs.n = n;
    cvs.q = q;
    cvs.dim_state = 1 + mcap;
    cvs.domain = domain;

    std::unordered_map<std::uint64_t, std::uint64_t> dense;
    const auto key = [&](std::uint64_t vertex, int color, std::uint64_t third,
                         std::uint64_t fourth) {
        const std::uint64_t raw = tree_raw_key(vcap, mcap, vertex, color, third, fourth);
        return dense.emplace(raw, dense.size()).first->second;
    };

    const std::size_t count = domain.size();
    cvs.rho.resize(count);
    cvs.sigma.resize(count);
    cvs.u.resize(count);
    cvs.v.resize(count);
    for (std::size_t xi = 0; xi < count; ++xi) {
        const std::uint64_t f = 1 + static_cast<std::uint64_t>(labels[xi]);
        cvs.rho[xi] = SparseVec{};
        cvs.rho[xi].add_term(0, 1.0);
        cvs.rho[xi].normalize();
        cvs.sigma[xi] = SparseVec{};
        cvs.sigma[xi].add_term(f, 1.0);
        cvs.sigma[xi].normalize();
        cvs.u[xi].assign(static_cast<std::size_t>(n), SparseVec{});
        cvs.v[xi].assign(static_cast<std::size_t>(n), SparseVec{});
        for (const TreePathEdge& e : paths[xi]) {
            const std::size_t j = static_cast<std::size_t>(e.query);
            const std::uint64_t c = 1 + e.child;
            SparseVec& pos = cvs.v[xi][j];
            const double sw = std::sqrt(e.taken_weight);
            pos.add_term(key(e.vertex, e.color, 0, 0), sw);
            pos.add_term(key(e.vertex, e.color, c, 0), sw);
            pos.add_term(key(e.vertex, e.color, 0, f), sw);
            pos.add_term(key(e.vertex, e.color, c, f), sw);
            SparseVec& neg = cvs.u[xi][j];
            const auto add_flipped = [&](int color, double coeff) {
                neg.add_term(key(e.vertex, color, 0, 0), coeff);
                neg.add_term(key(e.vertex, color, c, 0), -coeff);
                neg.add_term(key(e.vertex, color, 0, f), -coeff);
                neg.add_term(key(e.vertex, color, c, f), coeff);
            };
            if (!std::isinf(e.red_weight)) add_flipped(kRed, 1.0 / std::sqrt(e.red_weight));
            if (e.color == kRed) add_flipped(kBlack, 1.0 / std::sqrt(e.black_weight));
        }
        for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
            cvs.u[xi][j].normalize();
            cvs.v[xi][j].normalize();
        }
    }
    cvs.dim_vec = dense.size();
    return cvs;
}

}  // namespace detail

// Witness-size bounds along one input's path through a weighted tree.
inline TreeWitnessBounds tree_witness_bounds(const DecisionTree& t, const InputWord& x) {
    return detail::path_bounds(detail::tree_path_edges(t, x));
}

// Compile a weighted decision tree into a converting vector set over the
// given domain; the converted-to state records the reached leaf's label.
inline ConvertingVectorSet tree_to_cvs(const DecisionTree& t,
                                       const std::vector<InputWord>& domain) {
    if (const auto err = validate_tree(t)) throw std::invalid_argument("tree_to_cvs: " + *err);
    std::vector<int> labels;
    std::vector<std::vector<detail::TreePathEdge>> paths;
    labels.reserve(domain.size());
    paths.reserve(domain.size());
    for (const InputWord& x : domain) {
        const int label = tree_leaf_label(t, x);
        if (label < 0)
            throw std::invalid_argument("tree_to_cvs: input reaches an unlabeled leaf");
        labels.push_back(label);
        paths.push_back(detail::tree_path_edges(t, x));
    }
    return detail::cvs_from_tree_paths(t.n, t.q, static_cast<std::uint64_t>(t.vertex_count()),
                                       static_cast<std::uint64_t>(t.label_count()), domain,
                                       labels, paths);
}

// ------------------------------------------------------------------
// In-order search trees over bit strings: find both ones of a weight-2
// string, or the first one of a weight-1/2 string. Edges taken on reading a
// 1 are red. Vertex numbering is shared by the explicit tree builder and the
// direct vector-set builder below.
// ------------------------------------------------------------------
enum class SearchMode { find_both, find_first };

inline const char* to_string(SearchMode m) {
    return m == SearchMode::find_both ? "find-both" : "find-first";
}

// Answer id for the pair of one-positions i < j (0-based).
inline int find_both_label(int n, int i, int j) {
    return i * (n - 1) - i * (i - 1) / 2 + (j - i - 1);
}

inline std::uint64_t search_vertex_count(int n, SearchMode mode) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    return mode == SearchMode::find_both ? un * un + un - 1 : 2 * un + 1;
}

inline int search_label_count(int n, SearchMode mode) {
    return mode == SearchMode::find_both ? n * (n - 1) / 2 : n;
}

namespace detail {

// find-both layout: stage-0 chain s_d = d (d in [0, n-2]); the stage-1 chain
// started after seeing the first 1 at position i sits at offset n-1 plus the
// label rank; labeled leaves follow; then the two dead-leaf families.
inline std::uint64_t fb_stage1_vertex(int n, int i, int j) {
    return static_cast<std::uint64_t>(n - 1) +
           static_cast<std::uint64_t>(find_both_label(n, i, j));
}
inline std::uint64_t fb_leaf_vertex(int n, int i, int j) {
    return static_cast<std::uint64_t>(n - 1) +
           static_cast<std::uint64_t>(n) * (n - 1) / 2 +
           static_cast<std::uint64_t>(find_both_label(n, i, j));
}
inline std::uint64_t fb_dead_stage0(int n) {
    return static_cast<std::uint64_t>(n) * n - 1;
}
inline std::uint64_t fb_dead_stage1(int n, int i) {
    return static_cast<std::uint64_t>(n) * n + static_cast<std::uint64_t>(i);
}

inline std::vector<int> one_positions(const InputWord& x) {
    std::vector<int> ones;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (x[p] == 1)
            ones.push_back(static_cast<int>(p));
        else if (x[p] != 0)
            throw std::invalid_argument("search input must be a bit string");
    }
    return ones;
}

// Taken edges of the in-order walk, with canonical weights (black = G, red =
// depth) baked in, mirroring the explicit tree exactly.
inline std::vector<TreePathEdge> search_path_edges(int n, SearchMode mode,
                                                   const InputWord& x) {
    const std::vector<int> ones = one_positions(x);
    std::vector<TreePathEdge> out;
    if (mode == SearchMode::find_both) {
        if (ones.size() != 2)
            throw std::invalid_argument("find-both input must have exactly two ones");
        const int i = ones[0];
        const int j = ones[1];
        const double g = 2.0;
        for (int d = 0; d < i; ++d)
            out.push_back({static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(d + 1),
                           d, kBlack, g, static_cast<double>(d + 1), g});
        out.push_back({static_cast<std::uint64_t>(i), fb_stage1_vertex(n, i, i + 1), i, kRed,
                       static_cast<double>(i + 1), static_cast<double>(i + 1), g});
        for (int jj = i + 1; jj < j; ++jj)
            out.push_back({fb_stage1_vertex(n, i, jj), fb_stage1_vertex(n, i, jj + 1), jj,
                           kBlack, g, static_cast<double>(jj + 1), g});
        out.push_back({fb_stage1_vertex(n, i, j), fb_leaf_vertex(n, i, j), j, kRed,
                       static_cast<double>(j + 1), static_cast<double>(j + 1), g});
    } else {
        if (ones.empty() || ones.size() > 2)
            throw std::invalid_argument("find-first input must have one or two ones");
        const int d0 = ones[0];
        for (int d = 0; d < d0; ++d)
            out.push_back({static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(d + 1),
                           d, kBlack, 1.0, static_cast<double>(d + 1), 1.0});
        out.push_back({static_cast<std::uint64_t>(d0),
                       static_cast<std::uint64_t>(n + d0), d0, kRed,
                       static_cast<double>(d0 + 1), static_cast<double>(d0 + 1), 1.0});
    }
    return out;
}

}  // namespace detail

inline int search_label(int n, SearchMode mode, const InputWord& x) {
    const std::vector<int> ones = detail::one_positions(x);
    if (mode == SearchMode::find_both) {
        if (ones.size() != 2)
            throw std::invalid_argument("find-both input must have exactly two ones");
        return find_both_label(n, ones[0], ones[1]);
    }
    if (ones.empty() || ones.size() > 2)
        throw std::invalid_argument("find-first input must have one or two ones");
    return ones[0];
}

// Explicit in-order search tree (unit weights; apply assign_canonical_weights
// to obtain the weights the direct builder uses).
inline DecisionTree build_search_tree(int n, SearchMode mode) {
    if (n < 2) throw std::invalid_argument("build_search_tree: n must be >= 2");
    DecisionTree t;
    t.n = n;
    t.q = 2;
    t.root = 0;
    const int nv = static_cast<int>(search_vertex_count(n, mode));
    t.query.assign(static_cast<std::size_t>(nv), -1);
    t.label.assign(static_cast<std::size_t>(nv), -1);
    t.edges.resize(static_cast<std::size_t>(nv));
    const auto edge = [&t](int from, int to, int letter, int color) {
        TreeEdge e;
        e.to = to;
        e.color = color;
        e.weight = 1.0;
        e.letters = {letter};
        t.edges[static_cast<std::size_t>(from)].push_back(std::move(e));
    };
    if (mode == SearchMode::find_both) {
        for (int d = 0; d <= n - 2; ++d) {
            t.query[static_cast<std::size_t>(d)] = d;
            edge(d, static_cast<int>(detail::fb_stage1_vertex(n, d, d + 1)), 1, kRed);
            edge(d,
                 d + 1 <= n - 2 ? d + 1 : static_cast<int>(detail::fb_dead_stage0(n)),
                 0, kBlack);
        }
        for (int i = 0; i <= n - 2; ++i)
            for (int j = i + 1; j <= n - 1; ++j) {
                const int v = static_cast<int>(detail::fb_stage1_vertex(n, i, j));
                t.query[static_cast<std::size_t>(v)] = j;
                const int leaf = static_cast<int>(detail::fb_leaf_vertex(n, i, j));
                edge(v, leaf, 1, kRed);
                edge(v,
                     j + 1 <= n - 1 ? static_cast<int>(detail::fb_stage1_vertex(n, i, j + 1))
                                    : static_cast<int>(detail::fb_dead_stage1(n, i)),
                     0, kBlack);
                t.label[static_cast<std::size_t>(leaf)] = find_both_label(n, i, j);
            }
    } else {
        for (int d = 0; d <= n - 1; ++d) {
            t.query[static_cast<std::size_t>(d)] = d;
            edge(d, n + d, 1, kRed);
            edge(d, d + 1 <= n - 1 ? d + 1 : 2 * n, 0, kBlack);
            t.label[static_cast<std::size_t>(n + d)] = d;
        }
    }
    return t;
}

// Converting vector set for the search task over the given inputs, built
// directly from the in-order walk's closed form (no explicit tree, so large
// n stays cheap when the domain is small).
inline ConvertingVectorSet build_search_cvs(int n, SearchMode mode,
                                            const std::vector<InputWord>& domain) {
    if (n < 2) throw std::invalid_argument("build_search_cvs: n must be >= 2");
    std::vector<int> labels;
    std::vector<std::vector<detail::TreePathEdge>> paths;
    labels.reserve(domain.size());
    paths.reserve(domain.size());
    for (const InputWord& x : domain) {
        if (static_cast<int>(x.size()) != n)
            throw std::invalid_argument("build_search_cvs: input length mismatch");
        labels.push_back(search_label(n, mode, x));
        paths.push_back(detail::search_path_edges(n, mode, x));
    }
    return detail::cvs_from_tree_paths(
        n, 2, search_vertex_count(n, mode),
        static_cast<std::uint64_t>(search_label_count(n, mode)), domain, labels, paths);
}

inline double harmonic_number(int n) {
    double h = 0.0;
    for (int i = 1; i <= n; ++i) h += 1.0 / i;
    return h;
}

// Closed forms for the canonical-weighted search trees, 1-based positions:
// find-both with ones at i1 < i2 has w+ = 4(3 i2 + i1 - 4), w- = 4 H(i2) + 4;
// find-first with first one at p has w+ = 4(2p - 1), w- = 4 H(p) + 4.
struct SearchInputShape {
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::uint64_t classical_queries = 0;  // in-order cost
    int label = 0;
};

inline SearchInputShape search_input_shape(int n, SearchMode mode, const InputWord& x) {
    const std::vector<int> ones = detail::one_positions(x);
    SearchInputShape s;
    s.label = search_label(n, mode, x);
    if (mode == SearchMode::find_both) {
        const double i1 = ones[0] + 1;
        const double i2 = ones[1] + 1;
        s.w_plus = 4.0 * (3.0 * i2 + i1 - 4.0);
        s.w_minus = 4.0 * harmonic_number(static_cast<int>(i2)) + 4.0;
        s.classical_queries = static_cast<std::uint64_t>(i2);
    } else {
        const int p = ones[0] + 1;
        s.w_plus = 4.0 * (2.0 * p - 1.0);
        s.w_minus = 4.0 * harmonic_number(p) + 4.0;
        s.classical_queries = static_cast<std::uint64_t>(p);
    }
    return s;
}

// Worst case over the full promise class (not just a sampled sub-domain).
struct SearchWitnessBounds {
    double w_plus = 0.0;
    double w_minus = 0.0;
};

inline SearchWitnessBounds search_witness_bounds(int n, SearchMode mode) {
    SearchWitnessBounds b;
    b.w_plus = mode == SearchMode::find_both ? 4.0 * (4.0 * n - 5.0) : 4.0 * (2.0 * n - 1.0);
    b.w_minus = 4.0 * harmonic_number(n) + 4.0;
    return b;
}

// Cost of querying positions in order until the answer is known: find-both
// stops at the second 1, find-first at the first 1.
inline std::uint64_t classical_baseline_queries(const InputWord& x, SearchMode mode) {
    const std::vector<int> ones = detail::one_positions(x);
    if (mode == SearchMode::find_both) {
        if (ones.size() != 2)
            throw std::invalid_argument(
                "classical_baseline_queries: find-both input must have exactly two ones");
        return static_cast<std::uint64_t>(ones[1] + 1);
    }
    if (ones.empty() || ones.size() > 2)
        throw std::invalid_argument(
            "classical_baseline_queries: find-first input must have one or two ones");
    return static_cast<std::uint64_t>(ones[0] + 1);
}

// ------------------------------------------------------------------
// Power-law advice distribution: a latent dividing index i in {2..n} with
// p(i) proportional to (i-1)^k for k in (-2, -3/2), one uniform 1 strictly
// below it, and the bit at the dividing index set with probability p_plus
// (always 1 in find-both mode).
// ------------------------------------------------------------------
struct AdviceDistribution {
    int n = 0;
    double k = -1.75;
    double p_plus = 1.0;
    SearchMode mode = SearchMode::find_both;
    double a_n = 0.0;                  // normalizer of (i-1)^k over i in {2..n}
    std::vector<double> star;          // p(dividing index = i) at [i-2]
    std::vector<double> cumulative;    // running sums of star for sampling
    std::vector<double> first_suffix;  // sum_{j >= i} star(j)/(j-1) at [i-2]

    static AdviceDistribution make(int n, double k, SearchMode mode,
                                   double p_plus = 1.0) {
        if (n < 2) throw std::invalid_argument("AdviceDistribution: n must be >= 2");
        if (!(k > -2.0) || !(k < -1.5))
            throw std::invalid_argument("AdviceDistribution: k must lie in (-2, -3/2)");
        if (!(p_plus >= 0.0) || !(p_plus <= 1.0))
            throw std::invalid_argument("AdviceDistribution: p_plus must lie in [0, 1]");
        if (mode == SearchMode::find_both && p_plus != 1.0)
            throw std::invalid_argument(
                "AdviceDistribution: find-both requires the dividing bit always set");
        AdviceDistribution d;
        d.n = n;
        d.k = k;
        d.p_plus = p_plus;
        d.mode = mode;
        d.star.resize(static_cast<std::size_t>(n - 1));
        double total = 0.0;
        for (int i = 2; i <= n; ++i) {
            d.star[static_cast<std::size_t>(i - 2)] = std::pow(i - 1.0, k);
            total += d.star[static_cast<std::size_t>(i - 2)];
        }
        d.a_n = 1.0 / total;
        d.cumulative.resize(d.star.size());
        double acc = 0.0;
        for (std::size_t idx = 0; idx < d.star.size(); ++idx) {
            d.star[idx] *= d.a_n;
            acc += d.star[idx];
            d.cumulative[idx] = acc;
        }
        d.first_suffix.assign(d.star.size(), 0.0);
        double suffix = 0.0;
        for (int i = n; i >= 2; --i) {
            suffix += d.star[static_cast<std::size_t>(i - 2)] / (i - 1.0);
            d.first_suffix[static_cast<std::size_t>(i - 2)] = suffix;
        }
        return d;
    }

    // p(dividing index = i), 1-based.
    double star_probability(int i) const {
        return i >= 2 && i <= n ? star[static_cast<std::size_t>(i - 2)] : 0.0;
    }
    // p(the first 1 sits at position i), independent of p_plus.
    double first_one_marginal(int i) const {
        return i >= 1 && i + 1 <= n ? first_suffix[static_cast<std::size_t>(i - 1)] : 0.0;
    }
    // p(bit i reads 1).
    double bit_marginal(int i) const {
        double p = i >= 2 && i <= n ? p_plus * star[static_cast<std::size_t>(i - 2)] : 0.0;
        if (i >= 1 && i + 1 <= n) p += first_suffix[static_cast<std::size_t>(i - 1)];
        return p;
    }

    int sample_dividing_index(Rng& rng) const {
        return static_cast<int>(rng.sample_cumulative(cumulative)) + 2;
    }

    InputWord sample(Rng& rng) const {
        const int dividing = sample_dividing_index(rng);
        const int low = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(dividing - 1)));
        InputWord x(static_cast<std::size_t>(n), 0);
        x[static_cast<std::size_t>(low - 1)] = 1;
        if (mode == SearchMode::find_both || rng.bernoulli(p_plus))
            x[static_cast<std::size_t>(dividing - 1)] = 1;
        return x;
    }

    // Exact average of the in-order classical cost under this distribution.
    double expected_classical_queries() const {
        double e = 0.0;
        if (mode == SearchMode::find_both) {
            for (int i = 2; i <= n; ++i) e += star_probability(i) * i;
        } else {
            for (int i = 1; i <= n - 1; ++i) e += first_one_marginal(i) * i;
        }
        return e;
    }

    // Moment sums behind the separation: the sqrt moments stay bounded in n
    // while the linear moments grow like n^{k+2}.
    double sum_sqrt_dividing() const {
        double s = 0.0;
        for (int i = 2; i <= n; ++i) s += star_probability(i) * std::sqrt(static_cast<double>(i));
        return s;
    }
    double sum_linear_dividing() const {
        double s = 0.0;
        for (int i = 2; i <= n; ++i) s += star_probability(i) * i;
        return s;
    }
    double sum_sqrt_first() const {
        double s = 0.0;
        for (int i = 1; i <= n - 1; ++i) s += first_one_marginal(i) * std::sqrt(static_cast<double>(i));
        return s;
    }
    double sum_linear_first() const {
        double s = 0.0;
        for (int i = 1; i <= n - 1; ++i) s += first_one_marginal(i) * i;
        return s;
    }
};

// Least-squares slope of log y against log x.
inline double fit_log_log_slope(const std::vector<double>& xs,
                                const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_log_log_slope: need two matched points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0) || !(ys[i] > 0))
            throw std::invalid_argument("fit_log_log_slope: values must be positive");
        const double lx = std::log(xs[i]);
        const double ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double count = static_cast<double>(xs.size());
    return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

// Exact moment sums over a grid of n, with the log-log growth fit of the
// linear moments and the integral-comparison sandwich on the normalizer.
struct SumBoundsRow {
    int n = 0;
    double a_n = 0.0;
    double a_n_lower = 0.0;  // (k+1)/((n-1)^{k+1} + k)
    double a_n_upper = 0.0;  // (k+1)/(n^{k+1} - 1)
    double sum_sqrt_dividing = 0.0;
    double sum_linear_dividing = 0.0;
    double sum_sqrt_first = 0.0;
    double sum_linear_first = 0.0;
};

struct SumBoundsReport {
    double k = 0.0;
    std::vector<SumBoundsRow> rows;
    double slope_linear_dividing = 0.0;  // expect about k + 2
    double slope_linear_first = 0.0;
    double max_sum_sqrt_dividing = 0.0;  // expect O(1)
    double max_sum_sqrt_first = 0.0;
    bool normalizer_sandwich_ok = true;
};

inline SumBoundsReport verify_sum_bounds(double k, const std::vector<int>& n_grid) {
    if (n_grid.size() < 2)
        throw std::invalid_argument("verify_sum_bounds: need at least two grid points");
    SumBoundsReport report;
    report.k = k;
    std::vector<double> ns, linear_dividing, linear_first;
    for (const int n : n_grid) {
        const AdviceDistribution d = AdviceDistribution::make(n, k, SearchMode::find_both);
        SumBoundsRow row;
        row.n = n;
        row.a_n = d.a_n;
        row.a_n_lower = (k + 1.0) / (std::pow(n - 1.0, k + 1.0) + k);
        row.a_n_upper = (k + 1.0) / (std::pow(static_cast<double>(n), k + 1.0) - 1.0);
        row.sum_sqrt_dividing = d.sum_sqrt_dividing();
        row.sum_linear_dividing = d.sum_linear_dividing();
        row.sum_sqrt_first = d.sum_sqrt_first();
        row.sum_linear_first = d.sum_linear_first();
        if (!(row.a_n >= row.a_n_lower - 1e-12) || !(row.a_n <= row.a_n_upper + 1e-12))
            report.normalizer_sandwich_ok = false;
        report.max_sum_sqrt_dividing =
            std::max(report.max_sum_sqrt_dividing, row.sum_sqrt_dividing);
        report.max_sum_sqrt_first = std::max(report.max_sum_sqrt_first, row.sum_sqrt_first);
        report.rows.push_back(row);
        ns.push_back(static_cast<double>(n));
        linear_dividing.push_back(row.sum_linear_dividing);
        linear_first.push_back(row.sum_linear_first);
    }
    report.slope_linear_dividing = fit_log_log_slope(ns, linear_dividing);
    report.slope_linear_first = fit_log_log_slope(ns, linear_first);
    return report;
}

// ------------------------------------------------------------------
// Random valid decision tree (every leaf labeled) for property tests.
// ------------------------------------------------------------------
inline DecisionTree random_decision_tree(int n, int q, int max_depth, int label_count,
                                         Rng& rng) {
    if (n < 1 || q < 2 || max_depth < 1 || label_count < 1)
        throw std::invalid_argument("random_decision_tree: bad shape parameters");
    DecisionTree t;
    t.n = n;
    t.q = q;
    t.root = 0;
    const auto new_vertex = [&t]() {
        t.query.push_back(-1);
        t.label.push_back(-1);
        t.edges.emplace_back();
        return static_cast<int>(t.edges.size()) - 1;
    };

    struct Frame {
        int vertex;
        std::vector<int> remaining;
        int depth;
    };
    std::vector<Frame> stack;
    {
        std::vector<int> all(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) all[static_cast<std::size_t>(j)] = j;
        stack.push_back({new_vertex(), std::move(all), 0});
    }
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        const bool leaf = frame.remaining.empty() || frame.depth >= max_depth ||
                          (frame.depth > 0 && rng.bernoulli(0.35));
        if (leaf) {
            t.label[static_cast<std::size_t>(frame.vertex)] =
                static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(label_count)));
            continue;
        }
        const std::size_t pick = rng.uniform_int(frame.remaining.size());
        const int j = frame.remaining[pick];
        std::vector<int> rest = frame.remaining;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
        t.query[static_cast<std::size_t>(frame.vertex)] = j;

        std::vector<int> letters(static_cast<std::size_t>(q));
        for (int a = 0; a < q; ++a) letters[static_cast<std::size_t>(a)] = a;
        for (std::size_t a = letters.size(); a > 1; --a)
            std::swap(letters[a - 1], letters[rng.uniform_int(a)]);
        const int groups = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(q)));
        const int black_group = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(groups)));
        const double black_weight = rng.uniform(0.5, 2.5);
        const double red_weight = rng.uniform(0.5, 2.5);
        std::size_t at = 0;
        for (int gidx = 0; gidx < groups; ++gidx) {
            // Spread the q letters over the groups, each nonempty.
            const std::size_t take =
                gidx == groups - 1
                    ? letters.size() - at
                    : 1 + rng.uniform_int(letters.size() - at - static_cast<std::size_t>(groups - 1 - gidx));
            TreeEdge e;
            e.letters.assign(letters.begin() + static_cast<std::ptrdiff_t>(at),
                             letters.begin() + static_cast<std::ptrdiff_t>(at + take));
            std::sort(e.letters.begin(), e.letters.end());
            at += take;
            e.color = gidx == black_group ? kBlack : kRed;
            e.weight = e.color == kBlack ? black_weight : red_weight;
            e.to = new_vertex();
            stack.push_back({e.to, rest, frame.depth + 1});
            t.edges[static_cast<std::size_t>(frame.vertex)].push_back(std::move(e));
        }
    }
    return t;
}

}  // namespace spansim
