// Serialization round-trips, experiment drivers, CSV determinism, and the
// library-wide invariant registry.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "spansim/harness.hpp"

namespace spansim {
namespace {

TEST(JsonIo, SpanProgramRoundTrip) {
    const SpanProgram p = build_or_program(4);
    const Json j = span_to_json(p);
    EXPECT_EQ(j.at("type").get<std::string>(), "span_program");
    const SpanProgram q = span_from_json(j);
    EXPECT_EQ(q.n, p.n);
    EXPECT_EQ(q.q, p.q);
    EXPECT_EQ(q.dim_h, p.dim_h);
    EXPECT_EQ(q.dim_v, p.dim_v);
    ASSERT_EQ(q.blocks.size(), p.blocks.size());
    for (std::size_t jdx = 0; jdx < p.blocks.size(); ++jdx) {
        ASSERT_EQ(q.blocks[jdx].size(), p.blocks[jdx].size());
        for (std::size_t a = 0; a < p.blocks[jdx].size(); ++a) {
            const ComplexMatrix& lhs = q.blocks[jdx][a].basis;
            const ComplexMatrix& rhs = p.blocks[jdx][a].basis;
            ASSERT_EQ(lhs.rows(), rhs.rows());
            ASSERT_EQ(lhs.cols(), rhs.cols());
            if (lhs.size() > 0)
                EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
    EXPECT_LT((q.a - p.a).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((q.tau - p.tau).cwiseAbs().maxCoeff(), 1e-12);

    // Same optimal witnesses on both sides of the round trip.
    InputWord x{0, 1, 0, 1};
    const WitnessReport before = witness_report(p, x);
    const WitnessReport after = witness_report(q, x);
    EXPECT_EQ(before.kind, after.kind);
    EXPECT_NEAR(before.size, after.size, 1e-12);
}

TEST(JsonIo, SpanProgramRejectsMalformedDocuments) {
    EXPECT_THROW(span_from_json(Json::object()), std::invalid_argument);
    Json j = span_to_json(build_or_program(3));
    j["type"] = "decision_tree";
    EXPECT_THROW(span_from_json(j), std::invalid_argument);
    Json k = span_to_json(build_or_program(3));
    k["tau"][0] = "bogus";  // complex scalars must be [re, im] pairs
    EXPECT_THROW(span_from_json(k), std::invalid_argument);
}

TEST(JsonIo, TreeRoundTripIncludingInfiniteWeights) {
    DecisionTree t = assign_canonical_weights(
        build_search_tree(3, SearchMode::find_both));
    // Make one vertex's red edges infinitely heavy; the compiler must still
    // accept the tree (it skips such branches in the negative witnesses).
    bool patched = false;
    for (auto& edges : t.edges) {
        bool has_red = false;
        for (const TreeEdge& e : edges) has_red |= e.color == kRed;
        if (!has_red || patched) continue;
        for (TreeEdge& e : edges)
            if (e.color == kRed) e.weight = kInfiniteWeight;
        patched = true;
    }
    ASSERT_TRUE(patched);
    ASSERT_FALSE(validate_tree(t).has_value());

    const Json j = tree_to_json(t);
    const DecisionTree back = tree_from_json(j);
    ASSERT_EQ(back.vertex_count(), t.vertex_count());
    EXPECT_EQ(back.n, t.n);
    EXPECT_EQ(back.q, t.q);
    EXPECT_EQ(back.root, t.root);
    EXPECT_EQ(back.query, t.query);
    EXPECT_EQ(back.label, t.label);
    bool saw_inf = false;
    for (std::size_t v = 0; v < t.edges.size(); ++v) {
        ASSERT_EQ(back.edges[v].size(), t.edges[v].size());
        for (std::size_t e = 0; e < t.edges[v].size(); ++e) {
            EXPECT_EQ(back.edges[v][e].to, t.edges[v][e].to);
            EXPECT_EQ(back.edges[v][e].color, t.edges[v][e].color);
            EXPECT_EQ(back.edges[v][e].letters, t.edges[v][e].letters);
            if (std::isinf(t.edges[v][e].weight)) {
                saw_inf = true;
                EXPECT_TRUE(std::isinf(back.edges[v][e].weight));
            } else {
                EXPECT_DOUBLE_EQ(back.edges[v][e].weight, t.edges[v][e].weight);
            }
        }
    }
    EXPECT_TRUE(saw_inf);
}

TEST(JsonIo, BuiltinUris) {
    const SpanProgram p = load_span_program("builtin:or/6");
    EXPECT_EQ(p.n, 6);
    EXPECT_EQ(p.dim_h, 6);
    const DecisionTree both = load_tree("builtin:search-both/4");
    EXPECT_EQ(both.vertex_count(), search_vertex_count(4, SearchMode::find_both));
    const DecisionTree first = load_tree("builtin:search-first/5");
    EXPECT_EQ(first.vertex_count(), search_vertex_count(5, SearchMode::find_first));
    // Canonical weights are applied to builtins: reds carry their depth.
    bool found_weighted_red = false;
    for (const auto& edges : first.edges)
        for (const TreeEdge& e : edges)
            if (e.color == kRed && e.weight > 1.5) found_weighted_red = true;
    EXPECT_TRUE(found_weighted_red);

    EXPECT_THROW(load_span_program("builtin:xor/4"), std::invalid_argument);
    EXPECT_THROW(load_tree("builtin:search-both"), std::invalid_argument);
    EXPECT_THROW(load_json_file("/nonexistent/path.json"), std::invalid_argument);
}

TEST(Harness, CsvRenderingAndSummary) {
    std::vector<ExperimentRecord> rows(2);
    rows[0].trial = 0;
    rows[0].seed = 11;
    rows[0].input = "0101";
    rows[0].answer = "1";
    rows[0].correct = true;
    rows[0].queries = 100;
    rows[0].rounds = 3;
    rows[1].trial = 1;
    rows[1].seed = 12;
    rows[1].input = "0000";
    rows[1].answer = "1";
    rows[1].correct = false;
    rows[1].queries = 300;
    rows[1].rounds = 5;
    const std::string expected =
        "# spansim-csv-v1\n"
        "trial,seed,input,answer,correct,queries,rounds,wall_ms\n"
        "0,11,0101,1,1,100,3,0.000\n"
        "1,12,0000,1,0,300,5,0.000\n";
    EXPECT_EQ(render_csv(rows), expected);

    const ExperimentSummary s = summarize(rows);
    EXPECT_EQ(s.trials, 2u);
    EXPECT_EQ(s.errors, 1u);
    EXPECT_DOUBLE_EQ(s.error_rate, 0.5);
    EXPECT_DOUBLE_EQ(s.mean_queries, 200.0);
    EXPECT_NEAR(s.stddev_queries, std::sqrt(2.0) * 100.0, 1e-9);
    EXPECT_EQ(s.total_queries, 400u);
    EXPECT_EQ(s.total_rounds, 8u);
}

TEST(Harness, ConfigJsonRoundTripAndValidation) {
    ExperimentConfig cfg;
    cfg.kind = "advice-separation";
    cfg.mode = "find-first";
    cfg.n = 128;
    cfg.k = -1.6;
    cfg.p_plus = 0.5;
    cfg.trials = 77;
    cfg.seed = 1234567;
    cfg.n_grid = {64, 128};
    cfg.output = "out.csv";
    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    EXPECT_EQ(back.kind, cfg.kind);
    EXPECT_EQ(back.mode, cfg.mode);
    EXPECT_EQ(back.n, cfg.n);
    EXPECT_DOUBLE_EQ(back.k, cfg.k);
    EXPECT_DOUBLE_EQ(back.p_plus, cfg.p_plus);
    EXPECT_EQ(back.trials, cfg.trials);
    EXPECT_EQ(back.seed, cfg.seed);
    EXPECT_EQ(back.n_grid, cfg.n_grid);
    EXPECT_EQ(back.output, cfg.output);

    Json bad = config_to_json(cfg);
    bad["not-a-key"] = 3;
    EXPECT_THROW(config_from_json(bad), std::invalid_argument);
    EXPECT_THROW(config_from_json(Json::array()), std::invalid_argument);
}

TEST(Harness, WorkerCountResolution) {
    EXPECT_EQ(resolve_worker_count(5, 100), 5);
    EXPECT_EQ(resolve_worker_count(5, 2), 2);  // capped by job count
    ::setenv("SPANSIM_WORKERS", "3", 1);
    EXPECT_EQ(resolve_worker_count(0, 100), 3);
    EXPECT_EQ(resolve_worker_count(7, 100), 7);  // explicit beats env
    ::unsetenv("SPANSIM_WORKERS");
    EXPECT_GE(resolve_worker_count(0, 100), 1);
}

TEST(Harness, DecideExperimentIsWorkerCountInvariant) {
    ExperimentConfig cfg;
    cfg.kind = "decide";
    cfg.span_uri = "builtin:or/4";
    cfg.trials = 32;
    cfg.seed = 2024;
    cfg.delta = 0.1;
    cfg.workers = 1;
    const ExperimentOutput one = run_experiment(cfg);
    cfg.workers = 4;
    const ExperimentOutput four = run_experiment(cfg);
    EXPECT_EQ(render_csv(one.rows), render_csv(four.rows));

    // Sixteen inputs round-robin over 32 trials: every input twice.
    EXPECT_EQ(one.rows.size(), 32u);
    EXPECT_LE(one.summary.errors, 4u);  // delta = 0.1 with generous slack
    std::uint64_t total = 0;
    for (const ExperimentRecord& r : one.rows) total += r.queries;
    EXPECT_EQ(total, one.summary.total_queries);
}

TEST(Harness, DecideExperimentValidatesItsInputs) {
    ExperimentConfig cfg;
    cfg.kind = "decide";
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);  // no source
    cfg.span_uri = "builtin:or/4";
    cfg.trials = 0;
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
    cfg.trials = 4;
    cfg.input = "11111";  // wrong length
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
    cfg.input = "1010";
    const ExperimentOutput out = run_experiment(cfg);
    EXPECT_EQ(out.rows.size(), 4u);
    for (const ExperimentRecord& r : out.rows) EXPECT_EQ(r.input, "1010");
}

TEST(Harness, ConvertExperimentConvertsTreeInputs) {
    ExperimentConfig cfg;
    cfg.kind = "convert";
    cfg.tree_uri = "builtin:search-both/3";
    cfg.eps = 0.5;
    cfg.delta = 0.1;
    cfg.trials = 9;
    cfg.seed = 17;
    const ExperimentOutput out = run_experiment(cfg);
    EXPECT_EQ(out.rows.size(), 9u);
    for (const ExperimentRecord& r : out.rows) {
        EXPECT_TRUE(r.correct) << "conversion error " << r.answer;
        EXPECT_GT(r.queries, 0u);
        const double err = std::stod(r.answer);
        EXPECT_LE(err, 0.5);
    }
    // Inputs with fewer than two ones end in unlabeled leaves, so they are
    // excluded from the conversion domain.
    for (const ExperimentRecord& r : out.rows) {
        int ones = 0;
        for (char c : r.input) ones += c == '1';
        EXPECT_GE(ones, 2);
    }
}

TEST(Harness, VerifySearchExperimentFindsPlantedPairs) {
    ExperimentConfig cfg;
    cfg.kind = "verify-search";
    cfg.n = 6;
    cfg.k = -1.75;
    cfg.mode = "find-both";
    cfg.delta = 0.1;
    cfg.trials = 24;
    cfg.seed = 3;
    cfg.workers = 1;
    const ExperimentOutput one = run_experiment(cfg);
    EXPECT_EQ(one.rows.size(), 24u);
    EXPECT_LE(one.summary.errors, 5u);  // delta budget with slack
    for (const ExperimentRecord& r : one.rows) {
        EXPECT_EQ(r.input.rfind("n=6;ones=", 0), 0u);
        EXPECT_GT(r.queries, 0u);
    }
    cfg.workers = 3;
    const ExperimentOutput three = run_experiment(cfg);
    EXPECT_EQ(render_csv(one.rows), render_csv(three.rows));

    // find-first has no constant-cost verifier; the driver must refuse.
    cfg.mode = "find-first";
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
}

TEST(Harness, AdviceSeparationProducesPerSizeTable) {
    ExperimentConfig cfg;
    cfg.kind = "advice-separation";
    cfg.mode = "find-both";
    cfg.k = -1.75;
    cfg.delta = 0.25;
    cfg.trials = 16;
    cfg.seed = 5;
    cfg.n_grid = {8, 16};
    cfg.workers = 1;
    const ExperimentOutput one = run_experiment(cfg);
    EXPECT_EQ(one.rows.size(), 32u);
    // Trials are numbered globally across the size sweep.
    EXPECT_EQ(one.rows.front().trial, 0u);
    EXPECT_EQ(one.rows.back().trial, 31u);

    // Companion table: schema header, column header, one row per size.
    std::vector<std::string> lines;
    std::stringstream ss(one.companion_csv);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], kCsvSchema);
    EXPECT_EQ(lines[1],
              "n,trials,distinct_inputs,classical_exact,quantum_mean,"
              "quantum_stddev,reference_mean,errors");
    EXPECT_EQ(lines[2].rfind("8,16,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("16,16,", 0), 0u);

    // The exact classical column must match the distribution's expectation.
    const AdviceDistribution d8 =
        AdviceDistribution::make(8, cfg.k, SearchMode::find_both, 1.0);
    const std::string want = detail::format_g(d8.expected_classical_queries());
    EXPECT_NE(lines[2].find("," + want + ","), std::string::npos);

    bool has_slope = false;
    for (const std::string& note : one.notes)
        has_slope |= note.find("classical_slope=") != std::string::npos;
    EXPECT_TRUE(has_slope);

    cfg.workers = 4;
    const ExperimentOutput four = run_experiment(cfg);
    EXPECT_EQ(render_csv(one.rows), render_csv(four.rows));
    EXPECT_EQ(one.companion_csv, four.companion_csv);
}

TEST(Harness, AdviceSeparationFindFirstUsesConversion) {
    ExperimentConfig cfg;
    cfg.kind = "advice-separation";
    cfg.mode = "find-first";
    cfg.k = -1.6;
    cfg.p_plus = 0.5;
    cfg.eps = 0.5;
    cfg.delta = 0.1;
    cfg.trials = 10;
    cfg.seed = 11;
    cfg.n_grid = {8};
    const ExperimentOutput out = run_experiment(cfg);
    EXPECT_EQ(out.rows.size(), 10u);
    for (const ExperimentRecord& r : out.rows) {
        EXPECT_TRUE(r.correct) << "conversion error " << r.answer;
        EXPECT_LE(std::stod(r.answer), cfg.eps);
    }
}

TEST(Harness, InvariantRegistryFilters) {
    const InvariantReport numerics = run_invariant_checks("numerics/");
    EXPECT_EQ(numerics.passed + numerics.failed, 4);
    EXPECT_EQ(numerics.failed, 0) << numerics.text;
}

TEST(Harness, AllInvariantChecksPass) {
    const InvariantReport report = run_invariant_checks();
    EXPECT_EQ(report.failed, 0) << report.text;
    EXPECT_EQ(report.passed,
              static_cast<int>(invariant_checks().size()));
    // The report ends with a machine-readable totals line.
    EXPECT_NE(report.text.find("invariants passed="), std::string::npos);
}

}  // namespace
}  // namespace spansim
