#pragma once

// JSON serialization for span programs and decision trees, plus the URI
// loaders used by the CLI ("path/to/file.json" or "builtin:or/8",
// "builtin:search-both/5", "builtin:search-first/5").
//
// Complex scalars are stored as [re, im] pairs; matrices row-major with
// explicit shape, so files are diffable and library-independent.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spansim/apps.hpp"
#include "spansim/numerics.hpp"
#include "spansim/spanprog.hpp"

namespace spansim {

using Json = nlohmann::json;

inline Json complex_to_json(const Complex& z) { return Json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("json: complex scalar must be [re, im]");
    return Complex(j[0].get<double>(), j[1].get<double>());
}

inline Json matrix_to_json(const ComplexMatrix& m) {
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(complex_to_json(m(r, c)));
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline ComplexMatrix matrix_from_json(const Json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw std::invalid_argument("json: negative matrix shape");
    const Json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw std::invalid_argument("json: matrix data size mismatch");
    ComplexMatrix m(rows, cols);
    Eigen::Index at = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = complex_from_json(data[at++]);
    return m;
}

inline Json vector_to_json(const ComplexVector& v) {
    Json data = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(complex_to_json(v(i)));
    return data;
}

inline ComplexVector vector_from_json(const Json& j) {
    ComplexVector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = complex_from_json(j[i]);
    return v;
}

// ------------------------------------------------------------------
// Span programs.
// ------------------------------------------------------------------
inline Json span_to_json(const SpanProgram& p) {
    Json blocks = Json::array();
    for (const auto& per_letter : p.blocks) {
        Json letters = Json::array();
        for (const SubspaceBasis& b : per_letter) letters.push_back(matrix_to_json(b.basis));
        blocks.push_back(std::move(letters));
    }
    return Json{{"type", "span_program"},
                {"n", p.n},
                {"q", p.q},
                {"dim_h", p.dim_h},
                {"dim_v", p.dim_v},
                {"blocks", std::move(blocks)},
                {"h_true", matrix_to_json(p.h_true.basis)},
                {"h_false", matrix_to_json(p.h_false.basis)},
                {"a", matrix_to_json(p.a)},
                {"tau", vector_to_json(p.tau)}};
}

inline SpanProgram span_from_json(const Json& j) {
    if (j.value("type", "") != "span_program")
        throw std::invalid_argument("json: expected a span_program document");
    SpanProgram p;
    p.n = j.at("n").get<int>();
    p.q = j.at("q").get<int>();
    p.dim_h = j.at("dim_h").get<Eigen::Index>();
    p.dim_v = j.at("dim_v").get<Eigen::Index>();
    for (const Json& per_letter : j.at("blocks")) {
        std::vector<SubspaceBasis> letters;
        for (const Json& b : per_letter) letters.push_back({matrix_from_json(b)});
        p.blocks.push_back(std::move(letters));
    }
    p.h_true = {matrix_from_json(j.at("h_true"))};
    p.h_false = {matrix_from_json(j.at("h_false"))};
    p.a = matrix_from_json(j.at("a"));
    p.tau = vector_from_json(j.at("tau"));
    if (const auto err = validate(p)) throw std::invalid_argument("json: invalid span program: " + *err);
    return p;
}

// ------------------------------------------------------------------
// Decision trees. Weights serialize as numbers or the string "inf".
// ------------------------------------------------------------------
inline Json tree_to_json(const DecisionTree& t) {
    Json vertices = Json::array();
    for (int v = 0; v < t.vertex_count(); ++v) {
        Json edges = Json::array();
        for (const TreeEdge& e : t.edges[static_cast<std::size_t>(v)]) {
            Json je{{"to", e.to},
                    {"color", e.color == kRed ? "red" : "black"},
                    {"letters", e.letters}};
            if (std::isinf(e.weight))
                je["weight"] = "inf";
            else
                je["weight"] = e.weight;
            edges.push_back(std::move(je));
        }
        vertices.push_back(Json{{"query", t.query[static_cast<std::size_t>(v)]},
                                {"label", t.label[static_cast<std::size_t>(v)]},
                                {"edges", std::move(edges)}});
    }
    return Json{{"type", "decision_tree"},
                {"n", t.n},
                {"q", t.q},
                {"root", t.root},
                {"vertices", std::move(vertices)}};
}

inline DecisionTree tree_from_json(const Json& j) {
    if (j.value("type", "") != "decision_tree")
        throw std::invalid_argument("json: expected a decision_tree document");
    DecisionTree t;
    t.n = j.at("n").get<int>();
    t.q = j.at("q").get<int>();
    t.root = j.at("root").get<int>();
    for (const Json& jv : j.at("vertices")) {
        t.query.push_back(jv.at("query").get<int>());
        t.label.push_back(jv.at("label").get<int>());
        std::vector<TreeEdge> out;
        for (const Json& je : jv.at("edges")) {
            TreeEdge e;
            e.to = je.at("to").get<int>();
            const std::string color = je.at("color").get<std::string>();
            if (color == "red")
                e.color = kRed;
            else if (color == "black")
                e.color = kBlack;
            else
                throw std::invalid_argument("json: unknown edge color '" + color + "'");
            const Json& w = je.at("weight");
            if (w.is_string()) {
                if (w.get<std::string>() != "inf")
                    throw std::invalid_argument("json: weight must be a number or \"inf\"");
                e.weight = kInfiniteWeight;
            } else {
                e.weight = w.get<double>();
            }
            e.letters = je.at("letters").get<std::vector<int>>();
            out.push_back(std::move(e));
        }
        t.edges.push_back(std::move(out));
    }
    if (const auto err = validate_tree(t)) throw std::invalid_argument("json: invalid tree: " + *err);
    return t;
}

// ------------------------------------------------------------------
// File and URI loaders.
// ------------------------------------------------------------------
inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    try {
        Json j;
        in >> j;
        return j;
    } catch (const Json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

inline void save_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << j.dump(2) << "\n";
}

namespace detail {

// "builtin:NAME/NUMBER" -> (NAME, NUMBER); anything else -> empty name.
inline std::pair<std::string, int> parse_builtin(const std::string& uri) {
    const std::string prefix = "builtin:";
    if (uri.rfind(prefix, 0) != 0) return {"", 0};
    const std::string rest = uri.substr(prefix.size());
    const std::size_t slash = rest.find('/');
    if (slash == std::string::npos)
        throw std::invalid_argument("builtin URI needs a parameter, e.g. builtin:or/8");
    const std::string name = rest.substr(0, slash);
    int value = 0;
    try {
        value = std::stoi(rest.substr(slash + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("builtin URI parameter must be an integer: " + uri);
    }
    return {name, value};
}

}  // namespace detail

// Span program from a JSON file path or a builtin URI (builtin:or/N).
inline SpanProgram load_span_program(const std::string& uri) {
    const auto [name, value] = detail::parse_builtin(uri);
    if (name.empty()) return span_from_json(load_json_file(uri));
    if (name == "or") return build_or_program(value);
    throw std::invalid_argument("unknown builtin span program '" + name + "'");
}

// Decision tree from a JSON file path or a builtin URI
// (builtin:search-both/N, builtin:search-first/N; canonical weights applied).
inline DecisionTree load_tree(const std::string& uri) {
    const auto [name, value] = detail::parse_builtin(uri);
    if (name.empty()) return tree_from_json(load_json_file(uri));
    if (name == "search-both")
        return assign_canonical_weights(build_search_tree(value, SearchMode::find_both));
    if (name == "search-first")
        return assign_canonical_weights(build_search_tree(value, SearchMode::find_first));
    throw std::invalid_argument("unknown builtin tree '" + name + "'");
}

}  // namespace spansim
