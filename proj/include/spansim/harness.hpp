#pragma once

// Experiment harness: reproducible Monte-Carlo experiment drivers on top of
// the decision / state-conversion algorithms, CSV result records, a small
// deterministic worker pool, and a registry of library-wide invariant checks.
//
// Determinism contract: every trial draws from its own random stream derived
// from (master seed, trial index), so results are byte-identical for any
// worker count. Wall-clock columns are zero unless timings are requested.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "spansim/apps.hpp"
#include "spansim/circuit_oracle.hpp"
#include "spansim/convert.hpp"
#include "spansim/decider.hpp"
#include "spansim/json_io.hpp"
#include "spansim/numerics.hpp"
#include "spansim/phasesim.hpp"
#include "spansim/rng.hpp"
#include "spansim/spanprog.hpp"

namespace spansim {

// ------------------------------------------------------------------
// Result records and CSV rendering.
// ------------------------------------------------------------------

inline constexpr const char* kCsvSchema = "# spansim-csv-v1";
inline constexpr const char* kCsvColumns =
    "trial,seed,input,answer,correct,queries,rounds,wall_ms";

struct ExperimentRecord {
    std::uint64_t trial = 0;
    std::uint64_t seed = 0;   // the derived per-trial stream seed
    std::string input;        // input descriptor (no commas)
    std::string answer;       // algorithm output (label, bit, or error value)
    bool correct = true;
    std::uint64_t queries = 0;  // total oracle queries charged to the trial
    std::uint64_t rounds = 0;   // rounds entered across the sweep
    double wall_ms = 0.0;       // 0 unless timings were requested
};

namespace detail {

inline std::string format_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string format_fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace detail

inline std::string render_csv(const std::vector<ExperimentRecord>& rows) {
    std::string out = kCsvSchema;
    out += '\n';
    out += kCsvColumns;
    out += '\n';
    for (const ExperimentRecord& r : rows) {
        out += std::to_string(r.trial);
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += r.input;
        out += ',';
        out += r.answer;
        out += ',';
        out += r.correct ? '1' : '0';
        out += ',';
        out += std::to_string(r.queries);
        out += ',';
        out += std::to_string(r.rounds);
        out += ',';
        out += detail::format_fixed3(r.wall_ms);
        out += '\n';
    }
    return out;
}

struct ExperimentSummary {
    std::size_t trials = 0;
    std::size_t errors = 0;
    double error_rate = 0.0;
    double mean_queries = 0.0;
    double stddev_queries = 0.0;  // sample standard deviation
    std::uint64_t total_queries = 0;
    std::uint64_t total_rounds = 0;
    double mean_rounds = 0.0;
};

inline ExperimentSummary summarize(const std::vector<ExperimentRecord>& rows) {
    ExperimentSummary s;
    s.trials = rows.size();
    if (rows.empty()) return s;
    double sum = 0.0;
    for (const ExperimentRecord& r : rows) {
        if (!r.correct) ++s.errors;
        s.total_queries += r.queries;
        s.total_rounds += r.rounds;
        sum += static_cast<double>(r.queries);
    }
    s.error_rate = static_cast<double>(s.errors) / static_cast<double>(s.trials);
    s.mean_queries = sum / static_cast<double>(s.trials);
    s.mean_rounds =
        static_cast<double>(s.total_rounds) / static_cast<double>(s.trials);
    if (rows.size() > 1) {
        double ss = 0.0;
        for (const ExperimentRecord& r : rows) {
            const double d = static_cast<double>(r.queries) - s.mean_queries;
            ss += d * d;
        }
        s.stddev_queries = std::sqrt(ss / static_cast<double>(rows.size() - 1));
    }
    return s;
}

inline std::string render_summary(const ExperimentSummary& s) {
    std::string out = "summary trials=" + std::to_string(s.trials);
    out += " errors=" + std::to_string(s.errors);
    out += " error_rate=" + detail::format_g(s.error_rate);
    out += " mean_queries=" + detail::format_g(s.mean_queries);
    out += " stddev_queries=" + detail::format_g(s.stddev_queries);
    out += " total_queries=" + std::to_string(s.total_queries);
    out += " mean_rounds=" + detail::format_g(s.mean_rounds);
    return out;
}

// ------------------------------------------------------------------
// Experiment configuration (CLI flags and JSON config files share names).
// ------------------------------------------------------------------

struct ExperimentConfig {
    std::string kind = "decide";  // decide | convert | verify-search | advice-separation
    std::string span_uri;         // --span: JSON file or builtin:or/N
    std::string graph_file;       // --graph: edge-list text file
    std::string tree_uri;         // --tree: JSON file or builtin:search-{both,first}/N
    std::string input;            // --input: fixed input word (digits)
    int n = 8;                    // --n: search instance size
    double k = -1.75;             // --k: advice power-law exponent
    double p_plus = 1.0;          // --p-plus: top-bit bias of the advice source
    std::string mode = "find-both";  // --mode: find-both | find-first
    double delta = 0.1;           // --delta: failure probability budget
    double eps = 0.25;            // --eps: conversion error budget
    int trials = 100;             // --trials
    std::uint64_t seed = 1;       // --seed
    int workers = 0;              // --workers: 0 = SPANSIM_WORKERS env or hardware
    bool timings = false;         // --timings: fill wall_ms (breaks byte-identism)
    std::vector<int> n_grid;      // --n-grid: sweep sizes for advice-separation
    std::string output;           // --output: CSV path ("" = stdout)
};

inline ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") c.kind = value.get<std::string>();
        else if (key == "span") c.span_uri = value.get<std::string>();
        else if (key == "graph") c.graph_file = value.get<std::string>();
        else if (key == "tree") c.tree_uri = value.get<std::string>();
        else if (key == "input") c.input = value.get<std::string>();
        else if (key == "n") c.n = value.get<int>();
        else if (key == "k") c.k = value.get<double>();
        else if (key == "p-plus") c.p_plus = value.get<double>();
        else if (key == "mode") c.mode = value.get<std::string>();
        else if (key == "delta") c.delta = value.get<double>();
        else if (key == "eps") c.eps = value.get<double>();
        else if (key == "trials") c.trials = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "workers") c.workers = value.get<int>();
        else if (key == "timings") c.timings = value.get<bool>();
        else if (key == "n-grid") c.n_grid = value.get<std::vector<int>>();
        else if (key == "output") c.output = value.get<std::string>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
    Json j = Json::object();
    j["kind"] = c.kind;
    if (!c.span_uri.empty()) j["span"] = c.span_uri;
    if (!c.graph_file.empty()) j["graph"] = c.graph_file;
    if (!c.tree_uri.empty()) j["tree"] = c.tree_uri;
    if (!c.input.empty()) j["input"] = c.input;
    j["n"] = c.n;
    j["k"] = c.k;
    j["p-plus"] = c.p_plus;
    j["mode"] = c.mode;
    j["delta"] = c.delta;
    j["eps"] = c.eps;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["timings"] = c.timings;
    if (!c.n_grid.empty()) j["n-grid"] = c.n_grid;
    if (!c.output.empty()) j["output"] = c.output;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    return config_from_json(load_json_file(path));
}

// ------------------------------------------------------------------
// Worker pool. Jobs are pulled from a shared counter; each job body knows
// which worker runs it so per-worker scratch state (algorithm caches) can be
// reused across jobs without locking.
// ------------------------------------------------------------------

inline int resolve_worker_count(int requested, std::size_t job_count) {
    int w = requested;
    if (w <= 0) {
        if (const char* env = std::getenv("SPANSIM_WORKERS")) w = std::atoi(env);
    }
    if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
    if (w <= 0) w = 1;
    const std::size_t cap = std::max<std::size_t>(job_count, 1);
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), cap));
}

template <typename Body>  // Body: void(std::size_t worker_id, std::size_t job)
inline void run_parallel_jobs(std::size_t job_count, int workers, Body&& body) {
    if (job_count == 0) return;
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto loop = [&](std::size_t worker_id) {
        for (;;) {
            const std::size_t job = next.fetch_add(1);
            if (job >= job_count) return;
            try {
                body(worker_id, job);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (workers <= 1) {
        loop(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int i = 0; i < workers; ++i)
            threads.emplace_back(loop, static_cast<std::size_t>(i));
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

// ------------------------------------------------------------------
// Shared experiment helpers.
// ------------------------------------------------------------------

namespace detail {

// Input words render as digit strings for alphabets up to 10 letters and as
// dot-separated integers beyond that; CSV cells must stay comma-free.
inline std::string render_word(const InputWord& x, int q) {
    std::string s;
    if (q <= 10) {
        for (int v : x) s += static_cast<char>('0' + v);
    } else {
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j) s += '.';
            s += std::to_string(x[j]);
        }
    }
    return s;
}

inline InputWord parse_word(const std::string& s, int n, int q) {
    InputWord x;
    if (s.find('.') != std::string::npos) {
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, '.')) x.push_back(std::stoi(tok));
    } else {
        for (char c : s) {
            if (c < '0' || c > '9')
                throw std::invalid_argument("input word: invalid character");
            x.push_back(c - '0');
        }
    }
    if (static_cast<int>(x.size()) != n)
        throw std::invalid_argument("input word: expected " + std::to_string(n) +
                                    " letters, got " + std::to_string(x.size()));
    for (int v : x)
        if (v < 0 || v >= q)
            throw std::invalid_argument("input word: letter out of range [0, q)");
    return x;
}

// Compact descriptor for sparse binary search inputs: 1-based positions of
// the ones, dash-separated.
inline std::string render_search_input(int n, const InputWord& x) {
    std::string s = "n=" + std::to_string(n) + ";ones=";
    bool first = true;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] == 0) continue;
        if (!first) s += '-';
        s += std::to_string(j + 1);
        first = false;
    }
    if (first) s += "none";
    return s;
}

inline SearchMode parse_mode(const std::string& mode) {
    if (mode == "find-both") return SearchMode::find_both;
    if (mode == "find-first") return SearchMode::find_first;
    throw std::invalid_argument("mode must be find-both or find-first, got '" +
                                mode + "'");
}

inline std::uint64_t domain_size_checked(int n, int q, std::uint64_t cap) {
    std::uint64_t total = 1;
    for (int j = 0; j < n; ++j) {
        total *= static_cast<std::uint64_t>(q);
        if (total > cap)
            throw std::invalid_argument(
                "full input domain exceeds " + std::to_string(cap) +
                " words; this experiment enumerates the whole domain");
    }
    return total;
}

}  // namespace detail

struct ExperimentOutput {
    std::vector<ExperimentRecord> rows;
    ExperimentSummary summary;
    std::vector<std::string> notes;  // extra key=value lines for stdout
    std::string companion_csv;       // per-size table (advice-separation only)
};

inline constexpr std::uint64_t kMaxEnumeratedDomain = 4096;

// ------------------------------------------------------------------
// decide: run the two-sided decision sweep on a span program.
// ------------------------------------------------------------------

inline ExperimentOutput run_decide_experiment(const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("decide: trials must be >= 1");
    if (!(cfg.delta > 0) || !(cfg.delta < 1))
        throw std::invalid_argument("decide: delta must be in (0, 1)");
    SpanProgram program;
    std::string source;
    if (!cfg.span_uri.empty()) {
        program = load_span_program(cfg.span_uri);
        source = cfg.span_uri;
    } else if (!cfg.graph_file.empty()) {
        program = build_st_connectivity(load_graph(cfg.graph_file));
        source = cfg.graph_file;
    } else {
        throw std::invalid_argument("decide: provide --span or --graph");
    }

    // Witness bounds are function-level constants, so they always come from
    // the full domain even when a single input is run.
    detail::domain_size_checked(program.n, program.q, kMaxEnumeratedDomain);
    const std::vector<InputWord> domain = full_domain(program.n, program.q);
    const MaxWitnesses mw = max_witnesses(program, domain);

    std::vector<InputWord> inputs;
    std::vector<int> truth;
    if (!cfg.input.empty()) {
        inputs.push_back(detail::parse_word(cfg.input, program.n, program.q));
    } else {
        inputs = domain;
    }
    truth.reserve(inputs.size());
    for (const InputWord& x : inputs) {
        const WitnessReport r = witness_report(program, x);
        if (r.kind == WitnessKind::positive) truth.push_back(1);
        else if (r.kind == WitnessKind::negative) truth.push_back(0);
        else
            throw std::invalid_argument(
                "decide: the program does not decide input " +
                detail::render_word(x, program.q));
    }

    const std::size_t trial_count = static_cast<std::size_t>(cfg.trials);
    std::vector<ExperimentRecord> rows(trial_count);
    // One job per distinct input; trials are assigned round-robin so every
    // input is exercised evenly.
    std::vector<std::vector<std::size_t>> by_input(inputs.size());
    for (std::size_t t = 0; t < trial_count; ++t)
        by_input[t % inputs.size()].push_back(t);

    DeciderOptions opt;
    opt.delta = cfg.delta;
    const int workers = resolve_worker_count(cfg.workers, by_input.size());
    std::vector<std::unique_ptr<Decider>> scratch(
        static_cast<std::size_t>(workers));
    run_parallel_jobs(by_input.size(), workers, [&](std::size_t wid, std::size_t job) {
        auto& dec = scratch[wid];
        if (!dec) dec = std::make_unique<Decider>(program, mw.w_plus, mw.w_minus);
        const InputWord& x = inputs[job];
        for (std::size_t t : by_input[job]) {
            const std::uint64_t stream = derive_stream_seed(cfg.seed, t);
            Rng rng(stream);
            const auto start = std::chrono::steady_clock::now();
            const DeciderResult res = dec->run(x, opt, rng);
            const auto stop = std::chrono::steady_clock::now();
            ExperimentRecord& row = rows[t];
            row.trial = t;
            row.seed = stream;
            row.input = detail::render_word(x, program.q);
            row.answer = std::to_string(res.answer);
            row.correct = res.answer == truth[job];
            row.queries = res.ledger.oracle_queries;
            row.rounds = res.ledger.rounds;
            if (cfg.timings)
                row.wall_ms =
                    std::chrono::duration<double, std::milli>(stop - start).count();
        }
    });

    ExperimentOutput out;
    out.rows = std::move(rows);
    out.summary = summarize(out.rows);
    out.notes.push_back("experiment=decide source=" + source +
                        " inputs=" + std::to_string(inputs.size()) +
                        " w_plus=" + detail::format_g(mw.w_plus) +
                        " w_minus=" + detail::format_g(mw.w_minus) +
                        " delta=" + detail::format_g(cfg.delta));
    return out;
}

// ------------------------------------------------------------------
// convert: run the state-conversion sweep on a compiled decision tree.
// ------------------------------------------------------------------

inline ExperimentOutput run_convert_experiment(const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("convert: trials must be >= 1");
    if (cfg.tree_uri.empty())
        throw std::invalid_argument("convert: provide --tree (file or builtin URI)");
    const DecisionTree tree = load_tree(cfg.tree_uri);

    detail::domain_size_checked(tree.n, tree.q, kMaxEnumeratedDomain);
    std::vector<InputWord> domain;
    for (const InputWord& x : full_domain(tree.n, tree.q))
        if (tree_leaf_label(tree, x) >= 0) domain.push_back(x);
    if (domain.empty())
        throw std::invalid_argument("convert: no inputs reach a labeled leaf");
    const ConvertingVectorSet cvs = tree_to_cvs(tree, domain);

    std::vector<std::size_t> inputs;  // indices into the domain
    if (!cfg.input.empty()) {
        const InputWord x = detail::parse_word(cfg.input, tree.n, tree.q);
        const auto it = std::find(domain.begin(), domain.end(), x);
        if (it == domain.end())
            throw std::invalid_argument(
                "convert: input does not reach a labeled leaf");
        inputs.push_back(static_cast<std::size_t>(it - domain.begin()));
    } else {
        inputs.resize(domain.size());
        for (std::size_t i = 0; i < domain.size(); ++i) inputs[i] = i;
    }

    StateConversionOptions opt;
    opt.eps = cfg.eps;
    opt.delta = cfg.delta;

    const std::size_t trial_count = static_cast<std::size_t>(cfg.trials);
    std::vector<ExperimentRecord> rows(trial_count);
    std::vector<std::vector<std::size_t>> by_input(inputs.size());
    for (std::size_t t = 0; t < trial_count; ++t)
        by_input[t % inputs.size()].push_back(t);

    const int workers = resolve_worker_count(cfg.workers, by_input.size());
    std::vector<std::unique_ptr<StateConverter>> scratch(
        static_cast<std::size_t>(workers));
    run_parallel_jobs(by_input.size(), workers, [&](std::size_t wid, std::size_t job) {
        auto& conv = scratch[wid];
        if (!conv) conv = std::make_unique<StateConverter>(cvs, opt);
        const std::size_t xi = inputs[job];
        for (std::size_t t : by_input[job]) {
            const std::uint64_t stream = derive_stream_seed(cfg.seed, t);
            Rng rng(stream);
            const auto start = std::chrono::steady_clock::now();
            const StateConversionResult res = conv->run(xi, rng);
            const auto stop = std::chrono::steady_clock::now();
            ExperimentRecord& row = rows[t];
            row.trial = t;
            row.seed = stream;
            row.input = detail::render_word(domain[xi], tree.q);
            row.answer = detail::format_g(res.conversion_error);
            row.correct = !res.exhausted && res.conversion_error <= cfg.eps;
            row.queries = res.ledger.oracle_queries;
            row.rounds = res.ledger.rounds;
            if (cfg.timings)
                row.wall_ms =
                    std::chrono::duration<double, std::milli>(stop - start).count();
        }
    });

    const WitnessSizes w = max_witness_sizes(cvs);
    ExperimentOutput out;
    out.rows = std::move(rows);
    out.summary = summarize(out.rows);
    out.notes.push_back("experiment=convert tree=" + cfg.tree_uri +
                        " domain=" + std::to_string(domain.size()) +
                        " w_plus=" + detail::format_g(w.w_plus) +
                        " w_minus=" + detail::format_g(w.w_minus) +
                        " eps=" + detail::format_g(cfg.eps) +
                        " delta=" + detail::format_g(cfg.delta));
    return out;
}

// ------------------------------------------------------------------
// verify-search: verified evaluation of the two-marked-indices search
// function on advice-sampled inputs.
// ------------------------------------------------------------------

namespace detail {

// Draw `trials` inputs from the advice distribution. Each trial owns the
// random stream derive_stream(seed, base + t); the stream state after
// sampling is kept so the algorithm's draws continue deterministically.
struct SampledTrials {
    std::vector<InputWord> domain;       // distinct inputs, first-seen order
    std::vector<std::size_t> input_of;   // trial -> domain index
    std::vector<Rng> streams;            // trial -> post-sampling rng state
    std::vector<std::uint64_t> seeds;    // trial -> stream seed
};

inline SampledTrials sample_trials(const AdviceDistribution& dist,
                                   std::size_t trials, std::uint64_t seed,
                                   std::uint64_t base) {
    SampledTrials s;
    s.input_of.reserve(trials);
    s.streams.reserve(trials);
    s.seeds.reserve(trials);
    std::map<InputWord, std::size_t> seen;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::uint64_t stream = derive_stream_seed(seed, base + t);
        Rng rng(stream);
        const InputWord x = dist.sample(rng);
        const auto [it, fresh] = seen.emplace(x, s.domain.size());
        if (fresh) s.domain.push_back(x);
        s.input_of.push_back(it->second);
        s.streams.push_back(rng);
        s.seeds.push_back(stream);
    }
    if (s.domain.size() > kMaxEnumeratedDomain)
        throw std::invalid_argument(
            "sampled input domain exceeds the supported size");
    return s;
}

}  // namespace detail

inline ExperimentOutput run_verify_search_experiment(const ExperimentConfig& cfg) {
    if (cfg.trials < 1)
        throw std::invalid_argument("verify-search: trials must be >= 1");
    const SearchMode mode = detail::parse_mode(cfg.mode);
    if (mode != SearchMode::find_both)
        throw std::invalid_argument(
            "verify-search: only find-both answers admit constant-cost "
            "verification; use the convert or advice-separation experiment for "
            "find-first");
    const AdviceDistribution dist =
        AdviceDistribution::make(cfg.n, cfg.k, mode, cfg.p_plus);
    const std::size_t trial_count = static_cast<std::size_t>(cfg.trials);
    detail::SampledTrials sampled =
        detail::sample_trials(dist, trial_count, cfg.seed, 0);

    const ConvertingVectorSet cvs = build_search_cvs(cfg.n, mode, sampled.domain);
    const SearchWitnessBounds bounds = search_witness_bounds(cfg.n, mode);
    EvaluationOptions opt;
    opt.delta = cfg.delta;
    opt.w_plus_bound = bounds.w_plus;
    opt.w_minus_bound = bounds.w_minus;

    std::vector<std::vector<std::size_t>> by_input(sampled.domain.size());
    for (std::size_t t = 0; t < trial_count; ++t)
        by_input[sampled.input_of[t]].push_back(t);

    std::vector<ExperimentRecord> rows(trial_count);
    const int workers = resolve_worker_count(cfg.workers, by_input.size());
    std::vector<std::unique_ptr<VerifiedEvaluator>> scratch(
        static_cast<std::size_t>(workers));
    run_parallel_jobs(by_input.size(), workers, [&](std::size_t wid, std::size_t job) {
        auto& eval = scratch[wid];
        if (!eval) eval = std::make_unique<VerifiedEvaluator>(cvs, opt);
        for (std::size_t t : by_input[job]) {
            Rng rng = sampled.streams[t];
            const auto start = std::chrono::steady_clock::now();
            const EvaluationResult res = eval->run(job, rng);
            const auto stop = std::chrono::steady_clock::now();
            ExperimentRecord& row = rows[t];
            row.trial = t;
            row.seed = sampled.seeds[t];
            row.input = detail::render_search_input(cfg.n, sampled.domain[job]);
            row.answer =
                res.error ? "error" : std::to_string(res.label_key - 1);
            row.correct = !res.error && res.label_key == eval->expected_label(job);
            row.queries = res.ledger.oracle_queries;
            row.rounds = res.ledger.rounds;
            if (cfg.timings)
                row.wall_ms =
                    std::chrono::duration<double, std::milli>(stop - start).count();
        }
    });

    ExperimentOutput out;
    out.rows = std::move(rows);
    out.summary = summarize(out.rows);
    out.notes.push_back("experiment=verify-search mode=" + cfg.mode +
                        " n=" + std::to_string(cfg.n) +
                        " k=" + detail::format_g(cfg.k) +
                        " distinct_inputs=" + std::to_string(sampled.domain.size()) +
                        " w_plus_bound=" + detail::format_g(bounds.w_plus) +
                        " w_minus_bound=" + detail::format_g(bounds.w_minus) +
                        " delta=" + detail::format_g(cfg.delta));
    return out;
}

// ------------------------------------------------------------------
// advice-separation: sweep instance sizes, comparing the exact expected
// classical in-order cost against the Monte-Carlo quantum query ledger.
// ------------------------------------------------------------------

struct AdviceSeparationPoint {
    int n = 0;
    std::size_t trials = 0;
    std::size_t distinct_inputs = 0;
    double classical_exact = 0.0;   // exact expectation, no sampling
    double quantum_mean = 0.0;      // Monte-Carlo mean of ledger queries
    double quantum_stddev = 0.0;
    double reference_mean = 0.0;    // mean sqrt(w_plus(x) * W_minus)
    std::size_t errors = 0;
};

inline ExperimentOutput run_advice_separation_experiment(
    const ExperimentConfig& cfg) {
    if (cfg.trials < 1)
        throw std::invalid_argument("advice-separation: trials must be >= 1");
    const SearchMode mode = detail::parse_mode(cfg.mode);
    std::vector<int> grid = cfg.n_grid.empty() ? std::vector<int>{cfg.n} : cfg.n_grid;
    for (int n : grid)
        if (n < 2)
            throw std::invalid_argument("advice-separation: sizes must be >= 2");

    const std::size_t per_n = static_cast<std::size_t>(cfg.trials);
    ExperimentOutput out;
    out.rows.reserve(per_n * grid.size());
    std::vector<AdviceSeparationPoint> points;
    points.reserve(grid.size());

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const int n = grid[gi];
        const AdviceDistribution dist =
            AdviceDistribution::make(n, cfg.k, mode, cfg.p_plus);
        const std::uint64_t base = static_cast<std::uint64_t>(gi) * per_n;
        detail::SampledTrials sampled =
            detail::sample_trials(dist, per_n, cfg.seed, base);

        const ConvertingVectorSet cvs = build_search_cvs(n, mode, sampled.domain);
        const SearchWitnessBounds bounds = search_witness_bounds(n, mode);

        std::vector<std::vector<std::size_t>> by_input(sampled.domain.size());
        for (std::size_t t = 0; t < per_n; ++t)
            by_input[sampled.input_of[t]].push_back(t);

        std::vector<ExperimentRecord> rows(per_n);
        const int workers = resolve_worker_count(cfg.workers, by_input.size());
        if (mode == SearchMode::find_both) {
            EvaluationOptions opt;
            opt.delta = cfg.delta;
            opt.w_plus_bound = bounds.w_plus;
            opt.w_minus_bound = bounds.w_minus;
            std::vector<std::unique_ptr<VerifiedEvaluator>> scratch(
                static_cast<std::size_t>(workers));
            run_parallel_jobs(
                by_input.size(), workers, [&](std::size_t wid, std::size_t job) {
                    auto& eval = scratch[wid];
                    if (!eval) eval = std::make_unique<VerifiedEvaluator>(cvs, opt);
                    for (std::size_t t : by_input[job]) {
                        Rng rng = sampled.streams[t];
                        const auto start = std::chrono::steady_clock::now();
                        const EvaluationResult res = eval->run(job, rng);
                        const auto stop = std::chrono::steady_clock::now();
                        ExperimentRecord& row = rows[t];
                        row.answer = res.error
                                         ? "error"
                                         : std::to_string(res.label_key - 1);
                        row.correct =
                            !res.error && res.label_key == eval->expected_label(job);
                        row.queries = res.ledger.oracle_queries;
                        row.rounds = res.ledger.rounds;
                        if (cfg.timings)
                            row.wall_ms = std::chrono::duration<double, std::milli>(
                                              stop - start)
                                              .count();
                    }
                });
        } else {
            // find-first answers are not constant-query verifiable, so the
            // quantum lane runs plain state conversion instead.
            StateConversionOptions opt;
            opt.eps = cfg.eps;
            opt.delta = cfg.delta;
            opt.w_plus_bound = bounds.w_plus;
            opt.w_minus_bound = bounds.w_minus;
            std::vector<std::unique_ptr<StateConverter>> scratch(
                static_cast<std::size_t>(workers));
            run_parallel_jobs(
                by_input.size(), workers, [&](std::size_t wid, std::size_t job) {
                    auto& conv = scratch[wid];
                    if (!conv) conv = std::make_unique<StateConverter>(cvs, opt);
                    for (std::size_t t : by_input[job]) {
                        Rng rng = sampled.streams[t];
                        const auto start = std::chrono::steady_clock::now();
                        const StateConversionResult res = conv->run(job, rng);
                        const auto stop = std::chrono::steady_clock::now();
                        ExperimentRecord& row = rows[t];
                        row.answer = detail::format_g(res.conversion_error);
                        row.correct =
                            !res.exhausted && res.conversion_error <= cfg.eps;
                        row.queries = res.ledger.oracle_queries;
                        row.rounds = res.ledger.rounds;
                        if (cfg.timings)
                            row.wall_ms = std::chrono::duration<double, std::milli>(
                                              stop - start)
                                              .count();
                    }
                });
        }

        AdviceSeparationPoint pt;
        pt.n = n;
        pt.trials = per_n;
        pt.distinct_inputs = sampled.domain.size();
        pt.classical_exact = dist.expected_classical_queries();
        double ref_sum = 0.0;
        for (std::size_t t = 0; t < per_n; ++t) {
            ExperimentRecord& row = rows[t];
            row.trial = base + t;
            row.seed = sampled.seeds[t];
            row.input = detail::render_search_input(
                n, sampled.domain[sampled.input_of[t]]);
            const SearchInputShape shape = search_input_shape(
                n, mode, sampled.domain[sampled.input_of[t]]);
            ref_sum += std::sqrt(shape.w_plus * bounds.w_minus);
            if (!row.correct) ++pt.errors;
        }
        const ExperimentSummary per_n_summary = summarize(rows);
        pt.quantum_mean = per_n_summary.mean_queries;
        pt.quantum_stddev = per_n_summary.stddev_queries;
        pt.reference_mean = ref_sum / static_cast<double>(per_n);
        points.push_back(pt);
        for (ExperimentRecord& row : rows) out.rows.push_back(std::move(row));
    }

    out.summary = summarize(out.rows);
    out.notes.push_back("experiment=advice-separation mode=" + cfg.mode +
                        " k=" + detail::format_g(cfg.k) +
                        " p_plus=" + detail::format_g(cfg.p_plus) +
                        " trials_per_n=" + std::to_string(per_n));
    std::string companion = kCsvSchema;
    companion +=
        "\nn,trials,distinct_inputs,classical_exact,quantum_mean,"
        "quantum_stddev,reference_mean,errors\n";
    std::vector<double> ns, classical, quantum;
    for (const AdviceSeparationPoint& pt : points) {
        companion += std::to_string(pt.n);
        companion += ',' + std::to_string(pt.trials);
        companion += ',' + std::to_string(pt.distinct_inputs);
        companion += ',' + detail::format_g(pt.classical_exact);
        companion += ',' + detail::format_g(pt.quantum_mean);
        companion += ',' + detail::format_g(pt.quantum_stddev);
        companion += ',' + detail::format_g(pt.reference_mean);
        companion += ',' + std::to_string(pt.errors);
        companion += '\n';
        ns.push_back(static_cast<double>(pt.n));
        classical.push_back(pt.classical_exact);
        quantum.push_back(pt.quantum_mean);
        out.notes.push_back(
            "point n=" + std::to_string(pt.n) +
            " distinct_inputs=" + std::to_string(pt.distinct_inputs) +
            " classical_exact=" + detail::format_g(pt.classical_exact) +
            " quantum_mean=" + detail::format_g(pt.quantum_mean) +
            " quantum_stddev=" + detail::format_g(pt.quantum_stddev) +
            " reference_mean=" + detail::format_g(pt.reference_mean) +
            " errors=" + std::to_string(pt.errors));
    }
    out.companion_csv = companion;
    if (points.size() >= 2) {
        out.notes.push_back(
            "classical_slope=" + detail::format_g(fit_log_log_slope(ns, classical)) +
            " quantum_slope=" + detail::format_g(fit_log_log_slope(ns, quantum)));
    }
    return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    if (cfg.kind == "decide") return run_decide_experiment(cfg);
    if (cfg.kind == "convert") return run_convert_experiment(cfg);
    if (cfg.kind == "verify-search") return run_verify_search_experiment(cfg);
    if (cfg.kind == "advice-separation")
        return run_advice_separation_experiment(cfg);
    throw std::invalid_argument("unknown experiment kind '" + cfg.kind + "'");
}

// ------------------------------------------------------------------
// Random instance generators shared by invariant checks and tests.
// ------------------------------------------------------------------

inline ComplexMatrix random_projector(Rng& rng, Eigen::Index dim,
                                      Eigen::Index rank) {
    const ComplexMatrix g = random_complex_matrix(rng, dim, rank);
    return projector_onto(orthonormalize(g));
}

// Random span program: each index gets a 1- or 2-dimensional block, each
// letter a random subspace of its block (their union spans the block almost
// surely), an optional free true/false subspace, a random target map, and a
// target vector inside the range of A. Inputs whose available subspace is
// small relative to dim_v end up with negative witnesses, larger ones with
// positive witnesses, so a forced dim_v controls the mix.
inline SpanProgram random_span_program(Rng& rng, int n, int q, int dim_v = 0) {
    SpanProgram p;
    p.n = n;
    p.q = q;
    std::vector<Eigen::Index> offset(static_cast<std::size_t>(n));
    Eigen::Index dim = 0;
    for (int j = 0; j < n; ++j) {
        offset[static_cast<std::size_t>(j)] = dim;
        dim += 1 + static_cast<Eigen::Index>(rng.uniform_int(2));  // block dim 1-2
    }
    const Eigen::Index free_true = static_cast<Eigen::Index>(rng.uniform_int(2));
    const Eigen::Index free_false = static_cast<Eigen::Index>(rng.uniform_int(2));
    p.dim_h = dim + free_true + free_false;
    p.dim_v = dim_v > 0 ? dim_v
                        : 1 + static_cast<Eigen::Index>(rng.uniform_int(2));

    p.blocks.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const Eigen::Index d =
            (j + 1 < n ? offset[static_cast<std::size_t>(j + 1)] : dim) -
            offset[static_cast<std::size_t>(j)];
        auto& letters = p.blocks[static_cast<std::size_t>(j)];
        letters.resize(static_cast<std::size_t>(q));
        for (int a = 0; a < q; ++a) {
            const Eigen::Index want =
                1 + static_cast<Eigen::Index>(
                        rng.uniform_int(static_cast<std::uint64_t>(d)));
            ComplexMatrix basis = ComplexMatrix::Zero(p.dim_h, want);
            basis.block(offset[static_cast<std::size_t>(j)], 0, d, want) =
                random_complex_matrix(rng, d, want);
            letters[static_cast<std::size_t>(a)] = orthonormalize(basis);
        }
    }
    if (free_true > 0) {
        ComplexMatrix basis = ComplexMatrix::Zero(p.dim_h, 1);
        basis(dim, 0) = Complex(1, 0);
        p.h_true = orthonormalize(basis);
    }
    if (free_false > 0) {
        ComplexMatrix basis = ComplexMatrix::Zero(p.dim_h, 1);
        basis(dim + free_true, 0) = Complex(1, 0);
        p.h_false = orthonormalize(basis);
    }
    p.a = random_complex_matrix(rng, p.dim_v, p.dim_h);
    p.tau = p.a * ComplexVector(random_complex_matrix(rng, p.dim_h, 1));
    if (const auto err = validate(p))
        throw std::runtime_error("random_span_program: " + *err);
    return p;
}

// ------------------------------------------------------------------
// Invariant checks: one named check per library-level guarantee. Each check
// returns std::nullopt on success or a human-readable failure message.
// ------------------------------------------------------------------

struct InvariantCheck {
    std::string name;
    std::function<std::optional<std::string>()> run;
};

namespace detail {

inline std::optional<std::string> fail_msg(const std::string& msg) { return msg; }

inline std::optional<std::string> check_projector_idempotent() {
    Rng rng(0x11d1);
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::Index dim = 3 + static_cast<Eigen::Index>(rng.uniform_int(8));
        const Eigen::Index rank = 1 + static_cast<Eigen::Index>(
                                          rng.uniform_int(static_cast<std::uint64_t>(dim)));
        const ComplexMatrix p = random_projector(rng, dim, rank);
        const double idem = (p * p - p).cwiseAbs().maxCoeff();
        const double herm = (p - p.adjoint()).cwiseAbs().maxCoeff();
        if (idem > 1e-9) return fail_msg("||P^2 - P|| = " + format_g(idem));
        if (herm > 1e-9) return fail_msg("||P - P^+|| = " + format_g(herm));
    }
    return std::nullopt;
}

inline std::optional<std::string> check_min_norm_solution() {
    Rng rng(0x11d2);
    for (int rep = 0; rep < 5; ++rep) {
        const ComplexMatrix a = random_complex_matrix(rng, 4, 7);
        const ComplexVector b = a * ComplexVector(random_complex_matrix(rng, 7, 1));
        const MinNormSolution sol = min_norm_solution(a, b);
        if (sol.residual > 1e-8)
            return fail_msg("residual " + format_g(sol.residual));
        // Minimum-norm solutions live in the row space: the kernel component
        // must vanish.
        const ComplexMatrix k = kernel_projector(a);
        const double leak = (k * sol.solution).norm();
        if (leak > 1e-8 * std::max(1.0, sol.solution.norm()))
            return fail_msg("kernel component " + format_g(leak));
    }
    return std::nullopt;
}

inline std::optional<std::string> check_eigensystem_roundtrip() {
    Rng rng(0x11d3);
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::Index dim = 4 + static_cast<Eigen::Index>(rng.uniform_int(9));
        const ComplexMatrix u = random_unitary(rng, dim);
        const EigenSystem sys = unitary_eigensystem(u);
        const double res = eigensystem_residual(u, sys);
        if (res > 1e-8) return fail_msg("round-trip residual " + format_g(res));
    }
    return std::nullopt;
}

// Product of two reflections: vectors orthogonal to the second reflection's
// subspace keep only O(Theta) mass in the low-phase window of the product.
inline double effective_gap_violation(int pairs, std::uint64_t seed) {
    Rng rng(seed);
    double worst = -1e9;
    for (int rep = 0; rep < pairs; ++rep) {
        const Eigen::Index dim = 3 + static_cast<Eigen::Index>(rng.uniform_int(10));
        const Eigen::Index r1 = 1 + static_cast<Eigen::Index>(rng.uniform_int(
                                        static_cast<std::uint64_t>(dim - 1)));
        const Eigen::Index r2 = 1 + static_cast<Eigen::Index>(rng.uniform_int(
                                        static_cast<std::uint64_t>(dim - 1)));
        const ComplexMatrix pi = random_projector(rng, dim, r1);
        const ComplexMatrix lambda = random_projector(rng, dim, r2);
        const ComplexMatrix id = ComplexMatrix::Identity(dim, dim);
        const ComplexMatrix u = (2.0 * pi - id) * (2.0 * lambda - id);
        ComplexVector w =
            (id - lambda) * ComplexVector(random_complex_matrix(rng, dim, 1));
        if (w.norm() < 1e-6) continue;  // lambda was full rank; nothing to test
        w.normalize();
        const EigenSystem sys = unitary_eigensystem(u);
        const ComplexVector overlaps = sys.vectors.adjoint() * (pi * w);
        for (const double theta : {0.01, 0.1, 0.5}) {
            double mass = 0.0;
            for (Eigen::Index kk = 0; kk < overlaps.size(); ++kk)
                if (std::abs(sys.phases[static_cast<std::size_t>(kk)]) <= theta)
                    mass += std::norm(overlaps(kk));
            worst = std::max(worst, std::sqrt(mass) - theta / 2.0);
        }
    }
    return worst;
}

inline std::optional<std::string> check_effective_spectral_gap() {
    const double worst = effective_gap_violation(200, 0x11d4);
    if (worst > 1e-8)
        return fail_msg("low-phase mass exceeds Theta/2 by " + format_g(worst));
    return std::nullopt;
}

inline std::optional<std::string> check_witness_duality() {
    Rng rng(0x22d1);
    for (int rep = 0; rep < 12; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform_int(2));
        const int q = 2 + static_cast<int>(rng.uniform_int(2));
        // Odd reps force a 4-dimensional target space so negative inputs
        // appear and the duality is exercised in both directions.
        const SpanProgram p = random_span_program(rng, n, q, rep % 2 ? 4 : 0);
        const SpanProgram d = complement(p);
        for (const InputWord& x : full_domain(n, q)) {
            const WitnessReport rp = witness_report(p, x);
            const WitnessReport rd = witness_report(d, x);
            if (rp.kind == WitnessKind::both || rp.kind == WitnessKind::none)
                return fail_msg("program does not decide an input");
            const bool flip =
                (rp.kind == WitnessKind::positive &&
                 rd.kind == WitnessKind::negative) ||
                (rp.kind == WitnessKind::negative &&
                 rd.kind == WitnessKind::positive);
            if (!flip) return fail_msg("complement did not flip the witness kind");
            if (std::abs(rp.size - rd.size) >
                1e-6 * std::max(1.0, std::abs(rp.size)))
                return fail_msg("dual sizes differ: " + format_g(rp.size) +
                                " vs " + format_g(rd.size));
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_exactly_one_witness() {
    Rng rng(0x22d2);
    std::vector<SpanProgram> programs;
    programs.push_back(build_or_program(5));
    for (int rep = 0; rep < 6; ++rep)
        programs.push_back(random_span_program(rng, 3, 2, rep % 2 ? 4 : 0));
    for (const SpanProgram& p : programs) {
        for (const InputWord& x : full_domain(p.n, p.q)) {
            const WitnessReport r = witness_report(p, x);
            if (r.positive_feasible == r.negative_feasible)
                return fail_msg("feasible witness count != 1 on some input");
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_positive_witness_fixed_point() {
    Rng rng(0x22d3);
    int tested = 0;
    for (int rep = 0; rep < 8 && tested < 10; ++rep) {
        const SpanProgram p = random_span_program(rng, 3, 2);
        for (const InputWord& x : full_domain(p.n, p.q)) {
            const WitnessReport r = witness_report(p, x);
            if (r.kind != WitnessKind::positive) continue;
            const double alpha = 1.25 * std::sqrt(std::max(r.size, 1e-12));
            const ExtendedProgram ext = extend_program(p, alpha);
            ComplexVector v = ComplexVector::Zero(ext.dim());
            v.head(p.dim_h) = -r.witness;
            v(ext.dim() - 1) = Complex(alpha, 0);
            const ComplexMatrix u = ext.unitary(x);
            const double moved = (u * v - v).norm() / v.norm();
            if (moved > 1e-8)
                return fail_msg("fixed-point residual " + format_g(moved));
            ++tested;
        }
    }
    if (tested == 0) return fail_msg("no positive inputs sampled");
    return std::nullopt;
}

inline std::optional<std::string> check_negative_witness_structure() {
    const auto verify = [](const SpanProgram& p, const InputWord& x,
                           const WitnessReport& r) -> std::optional<std::string> {
        const double alpha = 0.75;
        const ExtendedProgram ext = extend_program(p, alpha);
        // v = alpha * (omega A_ext)^+; the last column of A_ext is tau /
        // alpha and omega tau = 1, so the final coordinate is exactly 1.
        ComplexVector v(ext.dim());
        v.head(p.dim_h) = alpha * (p.a.adjoint() * r.witness);
        v(ext.dim() - 1) = Complex(1, 0);
        const ComplexMatrix k = kernel_projector(ext.a_ext);
        const double in_kernel = (k * v).norm() / v.norm();
        if (in_kernel > 1e-8)
            return fail_msg("kernel leakage " + format_g(in_kernel));
        const ComplexVector projected = ext.input_projector(x) * v;
        const double off = (projected - ext.hat_zero()).norm();
        if (off > 1e-8)
            return fail_msg("projected negative witness misses the anchor by " +
                            format_g(off));
        return std::nullopt;
    };

    // Anchor on inputs that are negative by construction: the all-zeros word
    // of an OR program.
    for (int n : {3, 5}) {
        const SpanProgram p = build_or_program(n);
        const InputWord x(static_cast<std::size_t>(n), 0);
        const WitnessReport r = witness_report(p, x);
        if (r.kind != WitnessKind::negative)
            return fail_msg("all-zeros OR input should be negative");
        if (auto err = verify(p, x, r)) return err;
    }

    // Random programs with a forced 4-dimensional target space: inputs whose
    // available subspace has fewer than 4 dimensions are negative, larger
    // ones positive, so both kinds appear.
    Rng rng(0x22d4);
    int tested = 0;
    for (int rep = 0; rep < 40 && tested < 10; ++rep) {
        const SpanProgram p = random_span_program(rng, 3, 2, 4);
        for (const InputWord& x : full_domain(p.n, p.q)) {
            const WitnessReport r = witness_report(p, x);
            if (r.kind != WitnessKind::negative) continue;
            if (auto err = verify(p, x, r)) return err;
            ++tested;
        }
    }
    if (tested < 5) return fail_msg("too few negative inputs sampled");
    return std::nullopt;
}

inline std::optional<std::string> check_phase_check_sandwich() {
    Rng rng(0x33d1);
    for (int rep = 0; rep < 30; ++rep) {
        const Eigen::Index dim = 3 + static_cast<Eigen::Index>(rng.uniform_int(6));
        const ComplexMatrix u = random_unitary(rng, dim);
        ComplexVector psi = random_complex_matrix(rng, dim, 1);
        psi.normalize();
        const double theta = 0.05 + 0.95 * rng.uniform();
        const double eps = 0.05 + 0.35 * rng.uniform();
        const PhaseCheckSpec spec = make_phase_check_spec(theta, eps);
        const EigenSystem sys = unitary_eigensystem(u);
        const double p = check_probability(sys, psi, spec);
        const ComplexVector overlaps = sys.vectors.adjoint() * psi;
        double zero_mass = 0.0, window_mass = 0.0;
        for (Eigen::Index kk = 0; kk < overlaps.size(); ++kk) {
            const double ph = sys.phases[static_cast<std::size_t>(kk)];
            if (std::abs(ph) <= 1e-9) zero_mass += std::norm(overlaps(kk));
            if (std::abs(ph) <= theta) window_mass += std::norm(overlaps(kk));
        }
        if (p < zero_mass - 1e-9)
            return fail_msg("check below the zero-phase mass");
        if (p > window_mass + eps + 1e-9)
            return fail_msg("check leaks beyond the window mass + eps");
    }
    return std::nullopt;
}

inline std::optional<std::string> check_phase_leakage_and_reflection() {
    Rng rng(0x33d2);
    int tested = 0;
    for (int rep = 0; rep < 60 && tested < 20; ++rep) {
        const Eigen::Index dim = 4 + static_cast<Eigen::Index>(rng.uniform_int(5));
        const ComplexMatrix u = random_unitary(rng, dim);
        const double theta = 0.2 + 0.6 * rng.uniform();
        const double eps = 0.05 + 0.25 * rng.uniform();
        const PhaseCheckSpec spec = make_phase_check_spec(theta, eps);
        const EigenSystem sys = unitary_eigensystem(u);
        // Assemble a state supported only on eigenphases outside the window.
        ComplexVector coeff = ComplexVector::Zero(dim);
        bool any = false;
        for (Eigen::Index kk = 0; kk < dim; ++kk) {
            if (std::abs(sys.phases[static_cast<std::size_t>(kk)]) > theta) {
                coeff(kk) = random_complex_gaussian(rng);
                any = true;
            }
        }
        if (!any) continue;
        ComplexVector psi = sys.vectors * coeff;
        psi.normalize();
        const double p = check_probability(sys, psi, spec);
        if (p > eps + 1e-9)
            return fail_msg("out-of-window state passes the check with p = " +
                            format_g(p));
        const double dist = reflection_distance(sys, psi, -psi, spec);
        if (dist > eps + 1e-9)
            return fail_msg("reflection moves an out-of-window state by " +
                            format_g(dist));
        ++tested;
    }
    if (tested < 5) return fail_msg("too few out-of-window samples");
    return std::nullopt;
}

inline std::optional<std::string> check_phase_circuit_agreement() {
    Rng rng(0x33d3);
    for (int rep = 0; rep < 3; ++rep) {
        const Eigen::Index dim = 3;
        const ComplexMatrix u = random_unitary(rng, dim);
        ComplexVector psi = random_complex_matrix(rng, dim, 1);
        psi.normalize();
        const EigenSystem sys = unitary_eigensystem(u);
        for (int t = 1; t <= 2; ++t) {
            for (int m = 1; m <= 2; ++m) {
                PhaseCheckSpec spec;
                spec.t = t;
                spec.m = m;
                const double closed = check_probability(sys, psi, spec);
                const double circuit =
                    circuit_ref::circuit_check_probability(u, psi, t, m);
                if (std::abs(closed - circuit) > 1e-8)
                    return fail_msg("closed form " + format_g(closed) +
                                    " vs circuit " + format_g(circuit));
            }
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_decider_one_sided_tests() {
    const SpanProgram p = build_or_program(6);
    const std::vector<InputWord> domain = full_domain(6, 2);
    const MaxWitnesses mw = max_witnesses(p, domain);
    Decider dec(p, mw.w_plus, mw.w_minus);
    const InputWord x0(6, 0);
    InputWord x1(6, 0);
    x1[2] = 1;
    const WitnessReport r1 = witness_report(p, x1);
    for (int i = 0; i <= dec.rounds(); ++i) {
        // Soundness: a false input never passes the positive-side test often.
        const double p0 = dec.accept_probability(false, x0, i);
        if (p0 > 1.0 / 3.0 + 1e-6)
            return fail_msg("false input passes the 1-test with p = " +
                            format_g(p0));
        // Completeness once the scaling dominates the witness size.
        const double alpha_sq = std::ldexp(1.0, 2 * i) / mw.w_minus;
        if (alpha_sq >= 3.0 * r1.size) {
            const double p1 = dec.accept_probability(false, x1, i);
            if (p1 < 2.0 / 3.0 - 1e-6)
                return fail_msg("true input fails the sufficient-round test, p = " +
                                format_g(p1));
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_decider_stopping_round() {
    const SpanProgram p = build_or_program(8);
    const std::vector<InputWord> domain = full_domain(8, 2);
    const MaxWitnesses mw = max_witnesses(p, domain);
    Decider dec(p, mw.w_plus, mw.w_minus);
    InputWord x(8, 0);
    x[0] = 1;
    const WitnessReport r = witness_report(p, x);
    DeciderOptions opt;
    opt.delta = 0.1;
    std::vector<int> stops;
    for (int trial = 0; trial < 301; ++trial) {
        Rng rng(derive_stream(0x44d1, static_cast<std::uint64_t>(trial)));
        stops.push_back(dec.run(x, opt, rng).rounds_used);
    }
    std::nth_element(stops.begin(), stops.begin() + stops.size() / 2, stops.end());
    const int median = stops[stops.size() / 2];
    const int bound = static_cast<int>(std::ceil(
                          std::log2(std::sqrt(3.0 * r.size * mw.w_minus)))) +
                      1;
    if (median > bound)
        return fail_msg("median stopping round " + std::to_string(median) +
                        " exceeds " + std::to_string(bound));
    return std::nullopt;
}

inline std::optional<std::string> check_decider_error_rate() {
    const SpanProgram p = build_or_program(4);
    const std::vector<InputWord> domain = full_domain(4, 2);
    const MaxWitnesses mw = max_witnesses(p, domain);
    Decider dec(p, mw.w_plus, mw.w_minus);
    DeciderOptions opt;
    opt.delta = 0.3;
    const int trials = 240;
    int wrong = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const InputWord& x = domain[static_cast<std::size_t>(trial) % domain.size()];
        const int truth = std::any_of(x.begin(), x.end(), [](int v) { return v; })
                              ? 1
                              : 0;
        Rng rng(derive_stream(0x44d2, static_cast<std::uint64_t>(trial)));
        if (dec.run(x, opt, rng).answer != truth) ++wrong;
    }
    const double rate = static_cast<double>(wrong) / trials;
    const double slack = 2.0 * std::sqrt(0.3 * 0.7 / trials);
    if (rate > 0.3 + slack)
        return fail_msg("error rate " + format_g(rate) + " > 0.3 + " +
                        format_g(slack));
    return std::nullopt;
}

// Shared fixture for the conversion checks: the canonical two-marked-index
// search instance on 4 bits compiled to a converting vector set.
inline const ConvertingVectorSet& small_search_cvs() {
    static const ConvertingVectorSet cvs = [] {
        std::vector<InputWord> domain;
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) {
                InputWord x(4, 0);
                x[static_cast<std::size_t>(i)] = 1;
                x[static_cast<std::size_t>(j)] = 1;
                domain.push_back(x);
            }
        }
        return build_search_cvs(4, SearchMode::find_both, domain);
    }();
    return cvs;
}

inline std::optional<std::string> check_conversion_plus_state() {
    const ConvertingVectorSet& cvs = small_search_cvs();
    const WitnessSizes w = max_witness_sizes(cvs);
    const double eps_hat = 0.02;
    for (std::size_t xi = 0; xi < cvs.size(); ++xi) {
        const WitnessSizes wx = witness_sizes(cvs, xi);
        const double alpha = 1.05 * wx.w_plus;
        const double theta = std::pow(eps_hat, 1.5) / std::sqrt(alpha * w.w_minus);
        const PhaseCheckSpec spec = make_phase_check_spec(theta, eps_hat * eps_hat);
        const ConversionEngine engine(cvs, xi, alpha, eps_hat);
        const double p = engine.plus_state_check_probability(spec);
        if (p <= 1.0 - eps_hat - 1e-6)
            return fail_msg("target-aligned state checks at only " + format_g(p));
    }
    return std::nullopt;
}

inline std::optional<std::string> check_conversion_minus_state() {
    const ConvertingVectorSet& cvs = small_search_cvs();
    const WitnessSizes w = max_witness_sizes(cvs);
    const double eps_hat = 0.05;
    for (std::size_t xi = 0; xi < cvs.size(); xi += 2) {
        for (const double scale : {1.0, 4.0}) {
            const double alpha = scale / w.w_minus;
            const double theta =
                std::pow(eps_hat, 1.5) / std::sqrt(alpha * w.w_minus);
            const PhaseCheckSpec spec =
                make_phase_check_spec(theta, eps_hat * eps_hat);
            const ConversionEngine engine(cvs, xi, alpha, eps_hat);
            const double mass = engine.minus_state_low_phase_mass(spec);
            if (mass > eps_hat * eps_hat / 2.0 + 1e-8)
                return fail_msg("low-phase mass " + format_g(mass));
            const double amp = std::sqrt(engine.minus_state_check_probability(spec));
            if (amp > eps_hat * (1.0 + 1.0 / std::sqrt(2.0)) + 1e-6)
                return fail_msg("orthogonal state checks at amplitude " +
                                format_g(amp));
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_conversion_break_accuracy() {
    const ConvertingVectorSet& cvs = small_search_cvs();
    const WitnessSizes w = max_witness_sizes(cvs);
    const double eps = 0.5;
    const double eps_hat = eps * eps / 36.0;
    const int t_rounds = std::max(
        0, static_cast<int>(std::ceil(std::log2(w.w_plus * w.w_minus) - 1e-12)));
    for (std::size_t xi = 0; xi < cvs.size(); xi += 3) {
        bool broke = false;
        for (int i = 0; i <= t_rounds && !broke; ++i) {
            for (int side = 0; side < 2 && !broke; ++side) {
                const double w_minus = side == 0 ? w.w_minus : w.w_plus;
                const double alpha = std::ldexp(1.0, i) / w_minus;
                const double theta =
                    std::pow(eps_hat, 1.5) / std::sqrt(alpha * w_minus);
                const PhaseCheckSpec spec =
                    make_phase_check_spec(theta, eps_hat * eps_hat);
                const ConvertingVectorSet prog =
                    side == 0 ? cvs : complement_cvs(cvs);
                const ConversionEngine engine(prog, xi, alpha, eps_hat);
                // Break rule evaluated on the exact probability.
                if (engine.check_probability(spec) - 0.5 > -2.75 * eps_hat) {
                    const double err = engine.reflection_distance(spec);
                    if (err > 6.0 * std::sqrt(eps_hat) + 1e-6)
                        return fail_msg("post-break conversion error " +
                                        format_g(err));
                    broke = true;
                }
            }
        }
        if (!broke) return fail_msg("sweep never satisfied the break rule");
    }
    return std::nullopt;
}

inline std::optional<std::string> check_conversion_gram_preserved() {
    const ConvertingVectorSet& cvs = small_search_cvs();
    const double base = gram_identity_error(cvs);
    const double comp = gram_identity_error(complement_cvs(cvs));
    const double scaled = gram_identity_error(rescale_balanced(cvs));
    const double worst = std::max({base, comp, scaled});
    if (worst > 1e-9)
        return fail_msg("Gram residual " + format_g(worst));
    return std::nullopt;
}

inline std::optional<std::string> check_conversion_ledger_closed_form() {
    const ConvertingVectorSet& cvs = small_search_cvs();
    StateConversionOptions opt;
    opt.eps = 0.5;
    opt.delta = 0.1;
    StateConverter conv(cvs, opt);
    const double eps_hat = opt.eps * opt.eps / 36.0;
    const WitnessSizes w = max_witness_sizes(cvs);
    const int t_rounds = conv.sweep_rounds();
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        Rng rng(derive_stream(0x55d1, trial));
        const StateConversionResult res = conv.run(trial % cvs.size(), rng);
        // Replay the visited rounds and re-derive every ledger column.
        QueryLedger expect;
        bool done = false;
        PhaseCheckSpec last_spec;
        for (int i = 0; i <= t_rounds && !done; ++i) {
            const double delta_i = opt.delta * std::ldexp(1.0, i - 1 - t_rounds);
            for (int side = 0; side < 2 && !done; ++side) {
                expect.rounds += 1;
                const double w_minus = side == 0 ? w.w_minus : w.w_plus;
                const double alpha = std::ldexp(1.0, i) / w_minus;
                const double theta =
                    std::pow(eps_hat, 1.5) / std::sqrt(alpha * w_minus);
                last_spec = make_phase_check_spec(theta, eps_hat * eps_hat);
                expect.estimation_calls += 1;
                expect.add_check(last_spec, amplitude_estimation_cost(
                                                eps_hat / 4.0, delta_i,
                                                opt.ae_cost_constant));
                done = i == res.i_stop && (side == 1) == res.used_complement &&
                       !res.exhausted;
            }
        }
        expect.add_reflection(last_spec);
        if (expect.oracle_queries != res.ledger.oracle_queries ||
            expect.u_applications != res.ledger.u_applications ||
            expect.phase_checks != res.ledger.phase_checks ||
            expect.rounds != res.ledger.rounds)
            return fail_msg("ledger does not match the replayed transcript");
    }
    return std::nullopt;
}

inline std::optional<std::string> check_stconn_effective_resistance() {
    Rng rng(0x66d1);
    for (int rep = 0; rep < 10; ++rep) {
        const int vertices = 3 + static_cast<int>(rng.uniform_int(4));
        Graph g;
        g.vertices = vertices;
        g.s = 0;
        g.t = 1;
        for (int u = 0; u < vertices; ++u)
            for (int v = u + 1; v < vertices; ++v)
                if (rng.bernoulli(0.6)) g.edges.push_back({u, v});
        if (g.edges.empty()) g.edges.push_back({0, 1});
        const SpanProgram p = build_st_connectivity(g);
        InputWord x(g.edges.size(), 0);
        for (std::size_t e = 0; e < g.edges.size(); ++e)
            x[e] = rng.bernoulli(0.7) ? 1 : 0;
        const double r = effective_resistance(g, x);
        const WitnessReport report = witness_report(p, x);
        if (std::isfinite(r)) {
            if (report.kind != WitnessKind::positive)
                return fail_msg("connected input lacks a positive witness");
            if (std::abs(report.size - r) > 1e-6 * std::max(1.0, r))
                return fail_msg("witness size " + format_g(report.size) +
                                " vs resistance " + format_g(r));
        } else if (report.kind != WitnessKind::negative) {
            return fail_msg("disconnected input lacks a negative witness");
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_tree_compiler_witnesses() {
    Rng rng(0x66d2);
    for (int rep = 0; rep < 4; ++rep) {
        const int n = 3 + static_cast<int>(rng.uniform_int(2));
        const int q = 2;
        const DecisionTree tree = random_decision_tree(n, q, 3, 3, rng);
        std::vector<InputWord> domain;
        for (const InputWord& x : full_domain(n, q))
            if (tree_leaf_label(tree, x) >= 0) domain.push_back(x);
        if (domain.empty()) continue;
        const ConvertingVectorSet cvs = tree_to_cvs(tree, domain);
        if (const auto err = validate_cvs(cvs)) return fail_msg(*err);
        const double gram = gram_identity_error(cvs);
        if (gram > 1e-9) return fail_msg("Gram residual " + format_g(gram));
        for (std::size_t xi = 0; xi < domain.size(); ++xi) {
            const TreeWitnessBounds bounds = tree_witness_bounds(tree, domain[xi]);
            const WitnessSizes ws = witness_sizes(cvs, xi);
            if (std::abs(ws.w_plus - bounds.plus) >
                    1e-9 * std::max(1.0, bounds.plus) ||
                std::abs(ws.w_minus - bounds.minus) >
                    1e-9 * std::max(1.0, bounds.minus))
                return fail_msg("compiled witness sizes miss the tree bounds");
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_advice_sampler_marginals() {
    const AdviceDistribution dist =
        AdviceDistribution::make(30, -1.75, SearchMode::find_first, 0.7);
    Rng rng(0x66d3);
    const int samples = 20000;
    std::vector<double> hits(31, 0.0);
    double classical_sum = 0.0;
    for (int s = 0; s < samples; ++s) {
        const InputWord x = dist.sample(rng);
        const std::uint64_t cost =
            classical_baseline_queries(x, SearchMode::find_first);
        classical_sum += static_cast<double>(cost);
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j]) hits[j + 1] += 1.0;
    }
    for (int i = 1; i <= 30; ++i) {
        const double expect = dist.bit_marginal(i);
        const double got = hits[static_cast<std::size_t>(i)] / samples;
        if (std::abs(expect - got) > 0.02)
            return fail_msg("bit marginal at " + std::to_string(i) + ": " +
                            format_g(got) + " vs " + format_g(expect));
    }
    const double mean = classical_sum / samples;
    const double exact = dist.expected_classical_queries();
    if (std::abs(mean - exact) > 0.25)
        return fail_msg("classical cost mean " + format_g(mean) + " vs exact " +
                        format_g(exact));
    return std::nullopt;
}

inline std::optional<std::string> check_advice_classical_identities() {
    for (const double p_plus : {1.0, 0.6}) {
        const AdviceDistribution both =
            AdviceDistribution::make(40, -1.8, SearchMode::find_both, 1.0);
        double direct = 0.0;
        for (int i = 2; i <= 40; ++i) direct += both.star_probability(i) * i;
        if (std::abs(both.expected_classical_queries() - direct) > 1e-9)
            return fail_msg("find-both classical expectation mismatch");
        const AdviceDistribution first = AdviceDistribution::make(
            40, -1.8, SearchMode::find_first, p_plus);
        if (std::abs(first.expected_classical_queries() - first.sum_linear_first()) >
            1e-9)
            return fail_msg("find-first classical expectation mismatch");
        if (std::abs(first.sum_linear_first() -
                     first.sum_linear_dividing() / 2.0) > 1e-9)
            return fail_msg("first-index linear sum is not half the dividing sum");
    }
    return std::nullopt;
}

inline std::optional<std::string> check_csv_determinism() {
    ExperimentConfig cfg;
    cfg.kind = "decide";
    cfg.span_uri = "builtin:or/4";
    cfg.trials = 12;
    cfg.seed = 99;
    cfg.workers = 1;
    const std::string once = render_csv(run_experiment(cfg).rows);
    cfg.workers = 3;
    const std::string again = render_csv(run_experiment(cfg).rows);
    if (once != again)
        return fail_msg("CSV differs between 1-worker and 3-worker runs");
    return std::nullopt;
}

inline std::optional<std::string> check_summary_conservation() {
    ExperimentConfig cfg;
    cfg.kind = "decide";
    cfg.span_uri = "builtin:or/4";
    cfg.trials = 10;
    cfg.seed = 7;
    const ExperimentOutput out = run_experiment(cfg);
    std::uint64_t queries = 0, rounds = 0;
    for (const ExperimentRecord& r : out.rows) {
        queries += r.queries;
        rounds += r.rounds;
    }
    if (queries != out.summary.total_queries || rounds != out.summary.total_rounds)
        return fail_msg("summary totals do not match the column sums");
    return std::nullopt;
}

}  // namespace detail

inline std::vector<InvariantCheck> invariant_checks() {
    return {
        {"numerics/projector-idempotent", detail::check_projector_idempotent},
        {"numerics/min-norm-solution", detail::check_min_norm_solution},
        {"numerics/eigensystem-roundtrip", detail::check_eigensystem_roundtrip},
        {"numerics/effective-spectral-gap", detail::check_effective_spectral_gap},
        {"spanprog/witness-duality", detail::check_witness_duality},
        {"spanprog/exactly-one-witness", detail::check_exactly_one_witness},
        {"spanprog/positive-witness-fixed-point",
         detail::check_positive_witness_fixed_point},
        {"spanprog/negative-witness-structure",
         detail::check_negative_witness_structure},
        {"phasesim/check-probability-sandwich", detail::check_phase_check_sandwich},
        {"phasesim/leakage-and-reflection",
         detail::check_phase_leakage_and_reflection},
        {"phasesim/circuit-agreement", detail::check_phase_circuit_agreement},
        {"decider/one-sided-tests", detail::check_decider_one_sided_tests},
        {"decider/stopping-round-concentration",
         detail::check_decider_stopping_round},
        {"decider/error-rate", detail::check_decider_error_rate},
        {"convert/plus-state-check", detail::check_conversion_plus_state},
        {"convert/minus-state-structure", detail::check_conversion_minus_state},
        {"convert/break-implies-accuracy", detail::check_conversion_break_accuracy},
        {"convert/gram-preserved", detail::check_conversion_gram_preserved},
        {"convert/ledger-closed-form", detail::check_conversion_ledger_closed_form},
        {"apps/stconn-effective-resistance",
         detail::check_stconn_effective_resistance},
        {"apps/tree-compiler-witnesses", detail::check_tree_compiler_witnesses},
        {"apps/advice-sampler-marginals", detail::check_advice_sampler_marginals},
        {"apps/advice-classical-identities",
         detail::check_advice_classical_identities},
        {"harness/csv-determinism", detail::check_csv_determinism},
        {"harness/summary-conservation", detail::check_summary_conservation},
    };
}

struct InvariantReport {
    int passed = 0;
    int failed = 0;
    std::string text;  // one PASS/FAIL line per check plus a totals line
};

inline InvariantReport run_invariant_checks(const std::string& filter = "") {
    InvariantReport report;
    for (const InvariantCheck& check : invariant_checks()) {
        if (!filter.empty() && check.name.find(filter) == std::string::npos)
            continue;
        std::optional<std::string> failure;
        try {
            failure = check.run();
        } catch (const std::exception& e) {
            failure = std::string("exception: ") + e.what();
        }
        if (failure) {
            ++report.failed;
            report.text += "FAIL " + check.name + ": " + *failure + "\n";
        } else {
            ++report.passed;
            report.text += "PASS " + check.name + "\n";
        }
    }
    report.text += "invariants passed=" + std::to_string(report.passed) +
                   " failed=" + std::to_string(report.failed) + "\n";
    return report;
}

}  // namespace spansim
