// Command-line frontend: witness reports, decision / conversion experiment
// drivers, and the library invariant suite. Exit codes: 0 success, 2 for
// validation problems (bad flags, malformed files, undecidable inputs),
// 1 for unexpected runtime failures.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "spansim/harness.hpp"

namespace {

using spansim::ExperimentConfig;

void add_experiment_options(CLI::App* sub, ExperimentConfig& cfg,
                            std::string& config_path) {
    sub->add_option("--config", config_path,
                    "JSON config file; explicit flags override its values");
    sub->add_option("--span", cfg.span_uri,
                    "span program JSON file or builtin:or/N");
    sub->add_option("--graph", cfg.graph_file, "edge-list graph file");
    sub->add_option("--tree", cfg.tree_uri,
                    "decision tree JSON file or builtin:search-{both,first}/N");
    sub->add_option("--input", cfg.input, "fixed input word (digit string)");
    sub->add_option("--n", cfg.n, "search instance size");
    sub->add_option("--k", cfg.k, "advice power-law exponent in (-2, -3/2)");
    sub->add_option("--p-plus", cfg.p_plus, "advice top-bit bias in [0, 1]");
    sub->add_option("--mode", cfg.mode, "find-both or find-first");
    sub->add_option("--delta", cfg.delta, "failure probability budget");
    sub->add_option("--eps", cfg.eps, "conversion error budget");
    sub->add_option("--trials", cfg.trials, "number of Monte-Carlo trials");
    sub->add_option("--seed", cfg.seed, "master random seed");
    sub->add_option("--workers", cfg.workers,
                    "worker threads (0 = SPANSIM_WORKERS env or hardware)");
    sub->add_flag("--timings", cfg.timings,
                  "record wall-clock per trial (CSV no longer byte-stable)");
    sub->add_option("--n-grid", cfg.n_grid,
                    "comma-separated instance sizes for advice-separation")
        ->delimiter(',');
    sub->add_option("--output", cfg.output,
                    "CSV output path (default: print to stdout)");
}

// Flags that were explicitly passed override values from --config.
ExperimentConfig merge_config(const CLI::App* sub, const ExperimentConfig& flags,
                              const std::string& config_path) {
    if (config_path.empty()) return flags;
    ExperimentConfig cfg = spansim::load_config(config_path);
    cfg.kind = flags.kind;
    if (sub->count("--span")) cfg.span_uri = flags.span_uri;
    if (sub->count("--graph")) cfg.graph_file = flags.graph_file;
    if (sub->count("--tree")) cfg.tree_uri = flags.tree_uri;
    if (sub->count("--input")) cfg.input = flags.input;
    if (sub->count("--n")) cfg.n = flags.n;
    if (sub->count("--k")) cfg.k = flags.k;
    if (sub->count("--p-plus")) cfg.p_plus = flags.p_plus;
    if (sub->count("--mode")) cfg.mode = flags.mode;
    if (sub->count("--delta")) cfg.delta = flags.delta;
    if (sub->count("--eps")) cfg.eps = flags.eps;
    if (sub->count("--trials")) cfg.trials = flags.trials;
    if (sub->count("--seed")) cfg.seed = flags.seed;
    if (sub->count("--workers")) cfg.workers = flags.workers;
    if (sub->count("--timings")) cfg.timings = flags.timings;
    if (sub->count("--n-grid")) cfg.n_grid = flags.n_grid;
    if (sub->count("--output")) cfg.output = flags.output;
    return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void emit_experiment(const spansim::ExperimentOutput& out,
                     const ExperimentConfig& cfg) {
    const std::string csv = spansim::render_csv(out.rows);
    if (cfg.output.empty()) {
        std::cout << csv;
        if (!out.companion_csv.empty()) std::cout << out.companion_csv;
    } else {
        write_text_file(cfg.output, csv);
        if (!out.companion_csv.empty())
            write_text_file(cfg.output + ".summary.csv", out.companion_csv);
        std::cout << "wrote " << cfg.output << " (" << out.rows.size()
                  << " rows)\n";
        if (!out.companion_csv.empty())
            std::cout << "wrote " << cfg.output << ".summary.csv\n";
    }
    for (const std::string& note : out.notes) std::cout << note << "\n";
    std::cout << spansim::render_summary(out.summary) << "\n";
}

void run_witness(const std::string& span_uri, const std::string& graph_file,
                 const std::string& input, const std::string& save_span) {
    spansim::SpanProgram program;
    if (!span_uri.empty() && !graph_file.empty())
        throw std::invalid_argument("witness: pass either --span or --graph");
    if (!span_uri.empty())
        program = spansim::load_span_program(span_uri);
    else if (!graph_file.empty())
        program = spansim::build_st_connectivity(spansim::load_graph(graph_file));
    else
        throw std::invalid_argument("witness: provide --span or --graph");
    if (!save_span.empty())
        spansim::save_json_file(save_span, spansim::span_to_json(program));

    const spansim::InputWord x =
        spansim::detail::parse_word(input, program.n, program.q);
    const spansim::WitnessReport r = spansim::witness_report(program, x);
    switch (r.kind) {
        case spansim::WitnessKind::positive:
            std::cout << "kind=positive size=" << spansim::detail::format_g(r.size)
                      << "\n";
            break;
        case spansim::WitnessKind::negative:
            std::cout << "kind=negative size=" << spansim::detail::format_g(r.size)
                      << "\n";
            break;
        case spansim::WitnessKind::both:
            std::cout << "kind=both positive_size="
                      << spansim::detail::format_g(r.positive_size)
                      << " negative_size="
                      << spansim::detail::format_g(r.negative_size) << "\n";
            break;
        case spansim::WitnessKind::none:
            std::cout << "kind=none\n";
            break;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spansim: span-program decision and state-conversion simulator"};
    app.require_subcommand(1);

    // witness: report the optimal witness for one input.
    auto* witness =
        app.add_subcommand("witness", "Optimal witness kind and size for an input");
    std::string w_span, w_graph, w_input, w_save;
    witness->add_option("--span", w_span, "span program JSON file or builtin:or/N");
    witness->add_option("--graph", w_graph, "edge-list graph file");
    witness->add_option("--input", w_input, "input word (digit string)")->required();
    witness->add_option("--save-span", w_save,
                        "also write the loaded program to this JSON file");
    witness->callback([&] { run_witness(w_span, w_graph, w_input, w_save); });

    // decide / convert: preset experiment kinds.
    auto* decide = app.add_subcommand(
        "decide", "Monte-Carlo runs of the two-sided decision sweep");
    ExperimentConfig decide_cfg;
    decide_cfg.kind = "decide";
    std::string decide_config;
    add_experiment_options(decide, decide_cfg, decide_config);
    decide->callback([&] {
        const ExperimentConfig cfg =
            merge_config(decide, decide_cfg, decide_config);
        emit_experiment(spansim::run_experiment(cfg), cfg);
    });

    auto* convert = app.add_subcommand(
        "convert", "Monte-Carlo runs of the state-conversion sweep on a tree");
    ExperimentConfig convert_cfg;
    convert_cfg.kind = "convert";
    std::string convert_config;
    add_experiment_options(convert, convert_cfg, convert_config);
    convert->callback([&] {
        const ExperimentConfig cfg =
            merge_config(convert, convert_cfg, convert_config);
        emit_experiment(spansim::run_experiment(cfg), cfg);
    });

    // experiment: generic driver with the kind as a positional argument.
    auto* experiment =
        app.add_subcommand("experiment", "Run a named experiment kind");
    ExperimentConfig exp_cfg;
    std::string exp_kind, exp_config;
    experiment->add_option(
        "kind", exp_kind, "decide | convert | verify-search | advice-separation");
    add_experiment_options(experiment, exp_cfg, exp_config);
    experiment->callback([&] {
        exp_cfg.kind = exp_kind;
        ExperimentConfig cfg = merge_config(experiment, exp_cfg, exp_config);
        if (exp_kind.empty()) {
            if (exp_config.empty())
                throw std::invalid_argument(
                    "experiment: pass a kind or a --config with one");
            cfg.kind = spansim::load_config(exp_config).kind;
        }
        emit_experiment(spansim::run_experiment(cfg), cfg);
    });

    // check-invariants: the library-wide invariant suite.
    auto* invariants = app.add_subcommand(
        "check-invariants", "Run every module's invariant checks");
    std::string filter;
    invariants->add_option("--filter", filter,
                           "only run checks whose name contains this substring");
    int invariant_failures = 0;
    invariants->callback([&] {
        const spansim::InvariantReport report = spansim::run_invariant_checks(filter);
        std::cout << report.text;
        invariant_failures = report.failed;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return invariant_failures > 0 ? 2 : 0;
}
