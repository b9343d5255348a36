// Builders: OR and st-connectivity span programs, weighted decision trees
// compiled to converting vector sets, in-order search trees, and the
// power-law advice distributions.

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "spansim/apps.hpp"
#include "spansim/convert.hpp"
#include "spansim/rng.hpp"
#include "spansim/spanprog.hpp"

namespace spansim {
namespace {

std::vector<InputWord> weight_two_domain(int n) {
    std::vector<InputWord> domain;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            InputWord x(static_cast<std::size_t>(n), 0);
            x[static_cast<std::size_t>(i)] = 1;
            x[static_cast<std::size_t>(j)] = 1;
            domain.push_back(x);
        }
    return domain;
}

std::vector<InputWord> weight_one_domain(int n) {
    std::vector<InputWord> domain;
    for (int i = 0; i < n; ++i) {
        InputWord x(static_cast<std::size_t>(n), 0);
        x[static_cast<std::size_t>(i)] = 1;
        domain.push_back(x);
    }
    return domain;
}

TEST(OrProgram, WitnessClosedForms) {
    const int n = 6;
    const SpanProgram p = build_or_program(n);
    EXPECT_FALSE(validate(p).has_value());
    for (const InputWord& x : full_domain(n, 2)) {
        int marked = 0;
        for (const int b : x) marked += b;
        const WitnessReport r = witness_report(p, x);
        if (marked == 0) {
            EXPECT_EQ(r.kind, WitnessKind::negative);
            EXPECT_NEAR(r.size, static_cast<double>(n), 1e-9);
        } else {
            EXPECT_EQ(r.kind, WitnessKind::positive);
            EXPECT_NEAR(r.size, 1.0 / marked, 1e-9);
        }
    }
    const MaxWitnesses mw = max_witnesses(p, full_domain(n, 2));
    EXPECT_NEAR(mw.w_plus, 1.0, 1e-9);
    EXPECT_NEAR(mw.w_minus, static_cast<double>(n), 1e-9);
}

TEST(Graphs, ParseValidateAndErrors) {
    std::istringstream good(
        "# three vertices, s = 0, t = 2\n"
        "3 0 2\n"
        "0 1  # first hop\n"
        "1 2\n");
    const Graph g = parse_graph(good);
    EXPECT_EQ(g.vertices, 3);
    EXPECT_EQ(g.s, 0);
    EXPECT_EQ(g.t, 2);
    ASSERT_EQ(g.edges.size(), 2u);
    EXPECT_EQ(g.edges[1], (std::pair<int, int>(1, 2)));

    std::istringstream bad_token("3 0 2\n0 x\n");
    EXPECT_THROW(parse_graph(bad_token), std::runtime_error);
    std::istringstream missing_header("2\n");
    EXPECT_THROW(parse_graph(missing_header), std::runtime_error);
    std::istringstream dangling("3 0 2\n0 1 2\n");
    EXPECT_THROW(parse_graph(dangling), std::runtime_error);
    std::istringstream self_loop("3 0 2\n1 1\n");
    EXPECT_THROW(parse_graph(self_loop), std::runtime_error);
    std::istringstream same_st("3 1 1\n0 1\n");
    EXPECT_THROW(parse_graph(same_st), std::runtime_error);

    Graph range;
    range.vertices = 3;
    range.s = 0;
    range.t = 2;
    range.edges = {{0, 5}};
    EXPECT_TRUE(validate_graph(range).has_value());
}

TEST(Graphs, ConnectivityWitnessesMatchResistance) {
    // Path s - a - t: resistance 2.
    Graph path;
    path.vertices = 3;
    path.s = 0;
    path.t = 2;
    path.edges = {{0, 1}, {1, 2}};
    const SpanProgram p_path = build_st_connectivity(path);
    EXPECT_FALSE(validate(p_path).has_value());
    const WitnessReport both = witness_report(p_path, {1, 1});
    EXPECT_EQ(both.kind, WitnessKind::positive);
    EXPECT_NEAR(both.size, 2.0, 1e-9);
    EXPECT_NEAR(effective_resistance(path, {1, 1}), 2.0, 1e-12);

    // Two parallel s-t edges: resistance 1/2.
    Graph par;
    par.vertices = 2;
    par.s = 0;
    par.t = 1;
    par.edges = {{0, 1}, {0, 1}};
    const WitnessReport half = witness_report(build_st_connectivity(par), {1, 1});
    EXPECT_EQ(half.kind, WitnessKind::positive);
    EXPECT_NEAR(half.size, 0.5, 1e-9);
    EXPECT_NEAR(effective_resistance(par, {1, 1}), 0.5, 1e-12);

    // Single candidate edge, absent: negative witness = unit potential drop.
    Graph k2;
    k2.vertices = 2;
    k2.s = 0;
    k2.t = 1;
    k2.edges = {{0, 1}};
    const WitnessReport cut = witness_report(build_st_connectivity(k2), {0});
    EXPECT_EQ(cut.kind, WitnessKind::negative);
    EXPECT_NEAR(cut.size, 1.0, 1e-9);
    EXPECT_TRUE(std::isinf(effective_resistance(k2, {0})));

    // Random graphs: positive witness equals the Laplacian value.
    Rng rng(20240817);
    for (int trial = 0; trial < 25; ++trial) {
        Graph g;
        g.vertices = 3 + static_cast<int>(rng.uniform_int(4));
        g.s = 0;
        g.t = g.vertices - 1;
        for (int u = 0; u < g.vertices; ++u)
            for (int v = u + 1; v < g.vertices; ++v)
                if (rng.bernoulli(0.6)) g.edges.emplace_back(u, v);
        if (g.edges.empty()) g.edges.emplace_back(0, 1);
        InputWord x(g.edges.size(), 0);
        for (auto& b : x) b = rng.bernoulli(0.7) ? 1 : 0;
        const double r = effective_resistance(g, x);
        const WitnessReport w = witness_report(build_st_connectivity(g), x);
        if (std::isinf(r)) {
            EXPECT_EQ(w.kind, WitnessKind::negative);
        } else {
            ASSERT_EQ(w.kind, WitnessKind::positive);
            EXPECT_NEAR(w.size, r, 1e-6);
        }
    }
}

TEST(Trees, SearchTreeShapeAndValidation) {
    const DecisionTree fb = build_search_tree(5, SearchMode::find_both);
    EXPECT_FALSE(validate_tree(fb).has_value());
    EXPECT_EQ(fb.vertex_count(), 29);
    std::size_t edge_count = 0;
    for (const auto& out : fb.edges) edge_count += out.size();
    EXPECT_EQ(edge_count, 28u);  // n^2 + n - 2
    EXPECT_EQ(fb.label_count(), 10);
    EXPECT_EQ(max_red_on_path(fb), 2);

    const DecisionTree ff = build_search_tree(4, SearchMode::find_first);
    EXPECT_FALSE(validate_tree(ff).has_value());
    EXPECT_EQ(ff.vertex_count(), 9);
    EXPECT_EQ(ff.label_count(), 4);
    EXPECT_EQ(max_red_on_path(ff), 1);
}

TEST(Trees, ValidateRejectsBrokenTrees) {
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.edges[0][0].color = kBlack;  // two black edges at the root
        EXPECT_TRUE(validate_tree(t).has_value());
    }
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.edges[0][0].letters = {0};  // letter 1 no longer covered
        EXPECT_TRUE(validate_tree(t).has_value());
    }
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.query[1] = 0;  // position 0 queried twice on a path
        EXPECT_TRUE(validate_tree(t).has_value());
    }
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.edges[1][1].to = 0;  // back edge into the root
        EXPECT_TRUE(validate_tree(t).has_value());
    }
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.edges[0][1].weight = 0.0;
        EXPECT_TRUE(validate_tree(t).has_value());
    }
    {
        DecisionTree t = build_search_tree(3, SearchMode::find_first);
        t.label[0] = 1;  // label on an internal vertex
        EXPECT_TRUE(validate_tree(t).has_value());
    }
}

TEST(Trees, CanonicalWeightAssignment) {
    const DecisionTree fb = assign_canonical_weights(build_search_tree(5, SearchMode::find_both));
    std::vector<int> depth(static_cast<std::size_t>(fb.vertex_count()), -1);
    depth[static_cast<std::size_t>(fb.root)] = 0;
    std::vector<int> stack{fb.root};
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (const TreeEdge& e : fb.edges[static_cast<std::size_t>(v)]) {
            depth[static_cast<std::size_t>(e.to)] = depth[static_cast<std::size_t>(v)] + 1;
            stack.push_back(e.to);
            if (e.color == kBlack)
                EXPECT_EQ(e.weight, 2.0);
            else
                EXPECT_EQ(e.weight, static_cast<double>(depth[static_cast<std::size_t>(v)] + 1));
        }
    }

    // Single path of black edges: the constant clamps to 1.
    DecisionTree chain;
    chain.n = 2;
    chain.q = 2;
    chain.root = 0;
    chain.query = {0, -1};
    chain.label = {-1, 0};
    chain.edges.resize(2);
    TreeEdge only;
    only.to = 1;
    only.color = kBlack;
    only.letters = {0, 1};
    chain.edges[0].push_back(only);
    const DecisionTree weighted = assign_canonical_weights(chain);
    EXPECT_EQ(weighted.edges[0][0].weight, 1.0);
}

TEST(Trees, PathsAndLabels) {
    const DecisionTree fb = build_search_tree(5, SearchMode::find_both);
    const InputWord x{0, 1, 0, 1, 0};
    const auto steps = tree_path(fb, x);
    EXPECT_EQ(steps.size(), 4u);  // 1-based position of the second one
    EXPECT_EQ(tree_leaf_label(fb, x), find_both_label(5, 1, 3));
    EXPECT_EQ(tree_leaf_label(fb, x), search_label(5, SearchMode::find_both, x));

    // Unreached answers: all-zeros and weight-1 walks end at unlabeled leaves.
    EXPECT_EQ(tree_leaf_label(fb, {0, 0, 0, 0, 0}), -1);
    EXPECT_EQ(tree_leaf_label(fb, {0, 0, 0, 1, 0}), -1);

    const DecisionTree ff = build_search_tree(4, SearchMode::find_first);
    EXPECT_EQ(tree_leaf_label(ff, {0, 1, 1, 0}), 1);
    EXPECT_EQ(tree_leaf_label(ff, {0, 0, 0, 1}), 3);
}

TEST(Trees, DirectBuilderMatchesCompiledTree) {
    for (const SearchMode mode : {SearchMode::find_both, SearchMode::find_first}) {
        const int n = 5;
        std::vector<InputWord> domain = weight_two_domain(n);
        if (mode == SearchMode::find_first) {
            const auto ones = weight_one_domain(n);
            domain.insert(domain.end(), ones.begin(), ones.end());
        }
        const ConvertingVectorSet direct = build_search_cvs(n, mode, domain);
        const ConvertingVectorSet compiled =
            tree_to_cvs(assign_canonical_weights(build_search_tree(n, mode)), domain);
        EXPECT_EQ(direct.dim_state, compiled.dim_state);
        EXPECT_EQ(direct.dim_vec, compiled.dim_vec);
        ASSERT_EQ(direct.size(), compiled.size());
        for (std::size_t xi = 0; xi < direct.size(); ++xi) {
            EXPECT_EQ(direct.sigma[xi].entries, compiled.sigma[xi].entries);
            for (int j = 0; j < n; ++j) {
                const auto& a_u = direct.u[xi][static_cast<std::size_t>(j)].entries;
                const auto& b_u = compiled.u[xi][static_cast<std::size_t>(j)].entries;
                ASSERT_EQ(a_u.size(), b_u.size());
                for (std::size_t e = 0; e < a_u.size(); ++e) {
                    EXPECT_EQ(a_u[e].first, b_u[e].first);
                    EXPECT_NEAR(std::abs(a_u[e].second - b_u[e].second), 0.0, 1e-12);
                }
                EXPECT_EQ(direct.v[xi][static_cast<std::size_t>(j)].entries,
                          compiled.v[xi][static_cast<std::size_t>(j)].entries);
            }
        }
    }
}

TEST(Trees, SearchCvsGramAndWitnessClosedForms) {
    const int n = 5;
    const std::vector<InputWord> domain = weight_two_domain(n);
    const ConvertingVectorSet cvs = build_search_cvs(n, SearchMode::find_both, domain);
    EXPECT_FALSE(validate_cvs(cvs).has_value());
    EXPECT_LE(gram_identity_error(cvs), 1e-10);

    const DecisionTree weighted =
        assign_canonical_weights(build_search_tree(n, SearchMode::find_both));
    for (std::size_t xi = 0; xi < domain.size(); ++xi) {
        const WitnessSizes ws = witness_sizes(cvs, xi);
        const SearchInputShape shape = search_input_shape(n, SearchMode::find_both, domain[xi]);
        EXPECT_NEAR(ws.w_plus, shape.w_plus, 1e-9);
        EXPECT_NEAR(ws.w_minus, shape.w_minus, 1e-9);
        const TreeWitnessBounds tb = tree_witness_bounds(weighted, domain[xi]);
        EXPECT_NEAR(ws.w_plus, tb.plus, 1e-9);
        EXPECT_NEAR(ws.w_minus, tb.minus, 1e-9);
    }
    const WitnessSizes mw = max_witness_sizes(cvs);
    const SearchWitnessBounds bounds = search_witness_bounds(n, SearchMode::find_both);
    EXPECT_NEAR(mw.w_plus, bounds.w_plus, 1e-9);
    EXPECT_NEAR(mw.w_minus, bounds.w_minus, 1e-9);

    // find-first over a mixed weight-1 / weight-2 domain.
    std::vector<InputWord> ffdom = weight_one_domain(6);
    ffdom.push_back({0, 1, 0, 0, 1, 0});
    const ConvertingVectorSet ff = build_search_cvs(6, SearchMode::find_first, ffdom);
    EXPECT_FALSE(validate_cvs(ff).has_value());
    EXPECT_LE(gram_identity_error(ff), 1e-10);
    for (std::size_t xi = 0; xi < ffdom.size(); ++xi) {
        const WitnessSizes ws = witness_sizes(ff, xi);
        const SearchInputShape shape = search_input_shape(6, SearchMode::find_first, ffdom[xi]);
        EXPECT_NEAR(ws.w_plus, shape.w_plus, 1e-9);
        EXPECT_NEAR(ws.w_minus, shape.w_minus, 1e-9);
    }
}

TEST(Trees, RandomTreesCompileToValidVectorSets) {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(3));
        const int q = 2 + static_cast<int>(rng.uniform_int(2));
        const DecisionTree t = assign_canonical_weights(
            random_decision_tree(n, q, 3, 3, rng));
        ASSERT_FALSE(validate_tree(t).has_value());
        const std::vector<InputWord> domain = full_domain(n, q);
        const ConvertingVectorSet cvs = tree_to_cvs(t, domain);
        EXPECT_FALSE(validate_cvs(cvs).has_value());
        EXPECT_LE(gram_identity_error(cvs), 1e-9);
        for (std::size_t xi = 0; xi < domain.size(); ++xi) {
            const WitnessSizes ws = witness_sizes(cvs, xi);
            const TreeWitnessBounds tb = tree_witness_bounds(t, domain[xi]);
            EXPECT_NEAR(ws.w_plus, tb.plus, 1e-9);
            EXPECT_NEAR(ws.w_minus, tb.minus, 1e-9);
        }
    }
}

TEST(Advice, DistributionClosedForms) {
    const AdviceDistribution d = AdviceDistribution::make(8, -1.75, SearchMode::find_both);
    double total = 0.0;
    for (int i = 2; i <= 8; ++i) total += d.star_probability(i);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(d.star_probability(2) / d.star_probability(5), std::pow(4.0, 1.75), 1e-9);

    // Brute-force the marginals from the generative description.
    const AdviceDistribution f =
        AdviceDistribution::make(7, -1.6, SearchMode::find_first, 0.7);
    std::vector<double> bit(8, 0.0), first(8, 0.0);
    for (int div = 2; div <= 7; ++div)
        for (int low = 1; low < div; ++low) {
            const double base = f.star_probability(div) / (div - 1);
            first[static_cast<std::size_t>(low)] += base;
            bit[static_cast<std::size_t>(low)] += base;
            bit[static_cast<std::size_t>(div)] += base * 0.7;
        }
    for (int i = 1; i <= 7; ++i) {
        EXPECT_NEAR(f.bit_marginal(i), bit[static_cast<std::size_t>(i)], 1e-12);
        EXPECT_NEAR(f.first_one_marginal(i), first[static_cast<std::size_t>(i)], 1e-12);
    }

    // The first-one linear moment is exactly half the dividing-index moment.
    EXPECT_NEAR(f.sum_linear_first(), f.sum_linear_dividing() / 2.0, 1e-12);
    EXPECT_NEAR(d.expected_classical_queries(), d.sum_linear_dividing(), 1e-12);

    EXPECT_THROW(AdviceDistribution::make(8, -1.2, SearchMode::find_both),
                 std::invalid_argument);
    EXPECT_THROW(AdviceDistribution::make(8, -1.75, SearchMode::find_both, 0.5),
                 std::invalid_argument);
}

TEST(Advice, SamplerMatchesMarginals) {
    const AdviceDistribution d =
        AdviceDistribution::make(6, -1.6, SearchMode::find_first, 0.5);
    Rng rng(99);
    const int trials = 40000;
    std::vector<double> bit_hits(7, 0.0);
    std::vector<double> first_hits(7, 0.0);
    double mean_cost = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const InputWord x = d.sample(rng);
        int weight = 0;
        int first = -1;
        for (int p = 0; p < 6; ++p)
            if (x[static_cast<std::size_t>(p)] == 1) {
                weight += 1;
                if (first < 0) first = p;
            }
        ASSERT_GE(weight, 1);
        ASSERT_LE(weight, 2);
        first_hits[static_cast<std::size_t>(first + 1)] += 1.0;
        for (int p = 0; p < 6; ++p) bit_hits[static_cast<std::size_t>(p + 1)] += x[static_cast<std::size_t>(p)];
        mean_cost += static_cast<double>(classical_baseline_queries(x, SearchMode::find_first));
    }
    for (int i = 1; i <= 6; ++i) {
        EXPECT_NEAR(bit_hits[static_cast<std::size_t>(i)] / trials, d.bit_marginal(i), 0.01);
        EXPECT_NEAR(first_hits[static_cast<std::size_t>(i)] / trials,
                    d.first_one_marginal(i), 0.01);
    }
    EXPECT_NEAR(mean_cost / trials, d.expected_classical_queries(), 0.02);

    // find-both samples always carry the dividing bit.
    const AdviceDistribution b = AdviceDistribution::make(6, -1.75, SearchMode::find_both);
    double mean_both = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const InputWord x = b.sample(rng);
        int weight = 0;
        for (const int v : x) weight += v;
        ASSERT_EQ(weight, 2);
        mean_both += static_cast<double>(classical_baseline_queries(x, SearchMode::find_both));
    }
    EXPECT_NEAR(mean_both / trials, b.expected_classical_queries(), 0.03);

    EXPECT_THROW(classical_baseline_queries({0, 0, 0}, SearchMode::find_both),
                 std::invalid_argument);
    EXPECT_THROW(classical_baseline_queries({1, 1, 1}, SearchMode::find_first),
                 std::invalid_argument);
}

TEST(Advice, SamplerIsDeterministic) {
    const AdviceDistribution d = AdviceDistribution::make(16, -1.75, SearchMode::find_both);
    Rng a(1234), b(1234);
    for (int trial = 0; trial < 50; ++trial) EXPECT_EQ(d.sample(a), d.sample(b));
}

TEST(Advice, SumBoundsReport) {
    const std::vector<int> grid{64, 128, 256, 512, 1024, 4096, 16384, 65536};
    const SumBoundsReport report = verify_sum_bounds(-1.75, grid);
    EXPECT_TRUE(report.normalizer_sandwich_ok);
    EXPECT_NEAR(report.slope_linear_dividing, 0.25, 0.15);
    EXPECT_NEAR(report.slope_linear_first, 0.25, 0.15);
    // sqrt moments stay bounded: never more than twice the smallest-n value.
    EXPECT_LE(report.max_sum_sqrt_dividing, 2.0 * report.rows.front().sum_sqrt_dividing);
    EXPECT_LE(report.max_sum_sqrt_first, 2.0 * report.rows.front().sum_sqrt_first);
    // and the linear moments do grow.
    EXPECT_GT(report.rows.back().sum_linear_dividing,
              2.0 * report.rows.front().sum_linear_dividing);
}

TEST(SearchCvs, EvaluatorAndConverterSmoke) {
    // find-both on n = 4 with verified evaluation.
    const int n = 4;
    const std::vector<InputWord> domain = weight_two_domain(n);
    const ConvertingVectorSet cvs = build_search_cvs(n, SearchMode::find_both, domain);
    const SearchWitnessBounds bounds = search_witness_bounds(n, SearchMode::find_both);
    EvaluationOptions opt;
    opt.delta = 0.25;
    opt.w_plus_bound = bounds.w_plus;
    opt.w_minus_bound = bounds.w_minus;
    VerifiedEvaluator eval(cvs, opt);
    Rng rng(2024);
    for (std::size_t xi = 0; xi < domain.size(); ++xi) {
        const EvaluationResult res = eval.run(xi, rng);
        EXPECT_FALSE(res.error);
        EXPECT_EQ(res.label_key, eval.expected_label(xi));
        EXPECT_GT(res.ledger.oracle_queries, 0u);
    }

    // find-first on a small domain with state conversion.
    std::vector<InputWord> ffdom = weight_one_domain(n);
    ffdom.push_back({0, 1, 0, 1});
    const ConvertingVectorSet ff = build_search_cvs(n, SearchMode::find_first, ffdom);
    const SearchWitnessBounds ffb = search_witness_bounds(n, SearchMode::find_first);
    StateConversionOptions copt;
    copt.eps = 0.3;
    copt.delta = 0.05;
    copt.w_plus_bound = ffb.w_plus;
    copt.w_minus_bound = ffb.w_minus;
    StateConverter converter(ff, copt);
    for (std::size_t xi = 0; xi < ffdom.size(); ++xi) {
        Rng trial_rng(derive_stream(55, xi));
        const StateConversionResult res = converter.run(xi, trial_rng);
        EXPECT_FALSE(res.exhausted);
        EXPECT_LE(res.conversion_error, copt.eps);
    }

    // Dense and reduced engines agree on the compiled sparse sets.
    const PhaseCheckSpec spec = make_phase_check_spec(0.05, 1e-3);
    const ConversionEngine dense(cvs, 2, 1.5, 0.02, ConversionBackend::dense);
    const ConversionEngine reduced(cvs, 2, 1.5, 0.02, ConversionBackend::reduced);
    EXPECT_NEAR(dense.check_probability(spec), reduced.check_probability(spec), 1e-9);
    EXPECT_NEAR(dense.reflection_distance(spec), reduced.reflection_distance(spec), 1e-6);
}

}  // namespace
}  // namespace spansim
