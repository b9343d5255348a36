#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "spansim/convert.hpp"
#include "spansim/phasesim.hpp"
#include "spansim/rng.hpp"

namespace {

using spansim::Complex;
using spansim::ConvertingVectorSet;
using spansim::SparseVec;

SparseVec single(std::uint64_t key, double value) {
    SparseVec s;
    s.add_term(key, Complex(value, 0));
    s.normalize();
    return s;
}

// One-bit identity function: rho_x = |0>, sigma_x = |1 + x>, witnesses
// u_0 = sqrt(2) e_0, v_0 = sqrt(2) e_0, u_1 = e_0/sqrt(2), v_1 = e_0/sqrt(2),
// so <u_x|v_y> = 1 whenever x != y. Witness sizes: (2, 2) at x=0 and
// (1/2, 1/2) at x=1.
ConvertingVectorSet make_identity_cvs() {
    ConvertingVectorSet cvs;
    cvs.n = 1;
    cvs.q = 2;
    cvs.dim_state = 3;
    cvs.dim_vec = 1;
    cvs.domain = {{0}, {1}};
    cvs.rho = {single(0, 1.0), single(0, 1.0)};
    cvs.sigma = {single(1, 1.0), single(2, 1.0)};
    const double r2 = std::sqrt(2.0);
    cvs.u = {{single(0, r2)}, {single(0, 1.0 / r2)}};
    cvs.v = {{single(0, r2)}, {single(0, 1.0 / r2)}};
    return cvs;
}

// Two-bit XOR: rho_x = |0>, sigma_x = |1 + (x0 ^ x1)>,
//   u_{x,0} = (-1)^{x1} e_{x0},  u_{x,1} = e_{x1},
//   v_{x,0} = (-1)^{x1} e_{1-x0}, v_{x,1} = e_{1-x1}.
// Differing in one position contributes +1; differing in both contributes
// -1 + 1 = 0, matching <rho|rho> - <sigma|sigma> for the XOR labels.
ConvertingVectorSet make_xor_cvs() {
    ConvertingVectorSet cvs;
    cvs.n = 2;
    cvs.q = 2;
    cvs.dim_state = 3;
    cvs.dim_vec = 2;
    for (int x0 = 0; x0 < 2; ++x0) {
        for (int x1 = 0; x1 < 2; ++x1) {
            cvs.domain.push_back({x0, x1});
            cvs.rho.push_back(single(0, 1.0));
            cvs.sigma.push_back(single(1 + (x0 ^ x1), 1.0));
            const double sign = x1 ? -1.0 : 1.0;
            cvs.u.push_back({single(static_cast<std::uint64_t>(x0), sign),
                             single(static_cast<std::uint64_t>(x1), 1.0)});
            cvs.v.push_back({single(static_cast<std::uint64_t>(1 - x0), sign),
                             single(static_cast<std::uint64_t>(1 - x1), 1.0)});
        }
    }
    return cvs;
}

// Three-letter, one-position identity: all witness vectors equal e_0, so
// every off-diagonal Gram entry is 1. Exercises the q = 3 gadget and the
// dense engine dispatch.
ConvertingVectorSet make_ternary_cvs() {
    ConvertingVectorSet cvs;
    cvs.n = 1;
    cvs.q = 3;
    cvs.dim_state = 4;
    cvs.dim_vec = 1;
    for (int a = 0; a < 3; ++a) {
        cvs.domain.push_back({a});
        cvs.rho.push_back(single(0, 1.0));
        cvs.sigma.push_back(single(static_cast<std::uint64_t>(1 + a), 1.0));
        cvs.u.push_back({single(0, 1.0)});
        cvs.v.push_back({single(0, 1.0)});
    }
    return cvs;
}

TEST(Gadget, TwoLetterStatesAreOrthonormalAndSwap) {
    const spansim::GadgetVectors g = spansim::build_gadget(2);
    for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(g.mu.col(a).norm(), 1.0, 1e-12);
        EXPECT_NEAR(g.nu.col(a).norm(), 1.0, 1e-12);
        // nu_a coincides with mu_{1-a} when q = 2.
        EXPECT_NEAR((g.nu.col(a) - g.mu.col(1 - a)).norm(), 0.0, 1e-12);
    }
    EXPECT_NEAR(std::abs(g.mu.col(0).adjoint().dot(g.mu.col(1))), 0.0, 1e-12);
}

TEST(Gadget, ThreeLetterOverlaps) {
    const spansim::GadgetVectors g = spansim::build_gadget(3);
    const double cross = 3.0 / (2.0 * 2.0);  // q / (2(q-1))
    const double same_family = (1.0 - 0.5) / 2.0;
    for (int a = 0; a < 3; ++a) {
        EXPECT_NEAR(g.mu.col(a).norm(), 1.0, 1e-12);
        EXPECT_NEAR(g.nu.col(a).norm(), 1.0, 1e-12);
        for (int b = 0; b < 3; ++b) {
            const Complex mn = g.mu.col(a).adjoint().dot(g.nu.col(b)).real();
            const double expect_mn = a == b ? 0.0 : cross;
            EXPECT_NEAR(mn.real(), expect_mn, 1e-12);
            EXPECT_NEAR(mn.imag(), 0.0, 1e-12);
            if (a != b) {
                EXPECT_NEAR(g.mu.col(a).adjoint().dot(g.mu.col(b)).real(),
                            same_family, 1e-12);
                EXPECT_NEAR(g.nu.col(a).adjoint().dot(g.nu.col(b)).real(),
                            same_family, 1e-12);
            }
        }
    }
}

TEST(VectorSet, ExamplesValidateAndSatisfyGramIdentity) {
    for (const auto& cvs :
         {make_identity_cvs(), make_xor_cvs(), make_ternary_cvs()}) {
        EXPECT_FALSE(spansim::validate_cvs(cvs).has_value());
        EXPECT_LT(spansim::gram_identity_error(cvs), 1e-12);
    }
}

TEST(VectorSet, WitnessSizes) {
    const ConvertingVectorSet id = make_identity_cvs();
    EXPECT_NEAR(spansim::witness_sizes(id, 0).w_plus, 2.0, 1e-12);
    EXPECT_NEAR(spansim::witness_sizes(id, 0).w_minus, 2.0, 1e-12);
    EXPECT_NEAR(spansim::witness_sizes(id, 1).w_plus, 0.5, 1e-12);
    EXPECT_NEAR(spansim::witness_sizes(id, 1).w_minus, 0.5, 1e-12);
    const spansim::WitnessSizes m = spansim::max_witness_sizes(id);
    EXPECT_NEAR(m.w_plus, 2.0, 1e-12);
    EXPECT_NEAR(m.w_minus, 2.0, 1e-12);

    const ConvertingVectorSet x = make_xor_cvs();
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(spansim::witness_sizes(x, i).w_plus, 2.0, 1e-12);
        EXPECT_NEAR(spansim::witness_sizes(x, i).w_minus, 2.0, 1e-12);
    }
}

TEST(VectorSet, ComplementSwapsWitnessRoles) {
    const ConvertingVectorSet id = make_identity_cvs();
    ConvertingVectorSet skew = id;
    for (auto& row : skew.u)
        for (auto& vec : row) vec *= Complex(2.0, 0);
    for (auto& row : skew.v)
        for (auto& vec : row) vec *= Complex(0.5, 0);
    EXPECT_LT(spansim::gram_identity_error(skew), 1e-12);
    const spansim::WitnessSizes m = spansim::max_witness_sizes(skew);
    EXPECT_NEAR(m.w_minus, 8.0, 1e-12);
    EXPECT_NEAR(m.w_plus, 0.5, 1e-12);

    const ConvertingVectorSet comp = spansim::complement_cvs(skew);
    EXPECT_LT(spansim::gram_identity_error(comp), 1e-12);
    const spansim::WitnessSizes mc = spansim::max_witness_sizes(comp);
    EXPECT_NEAR(mc.w_plus, 8.0, 1e-12);
    EXPECT_NEAR(mc.w_minus, 0.5, 1e-12);
}

TEST(VectorSet, RescaleBalancesWitnessSizes) {
    ConvertingVectorSet skew = make_identity_cvs();
    for (auto& row : skew.u)
        for (auto& vec : row) vec *= Complex(2.0, 0);
    for (auto& row : skew.v)
        for (auto& vec : row) vec *= Complex(0.5, 0);
    const ConvertingVectorSet balanced = spansim::rescale_balanced(skew);
    EXPECT_LT(spansim::gram_identity_error(balanced), 1e-12);
    const spansim::WitnessSizes m = spansim::max_witness_sizes(balanced);
    EXPECT_NEAR(m.w_plus, 2.0, 1e-12);   // sqrt(8 * 0.5)
    EXPECT_NEAR(m.w_minus, 2.0, 1e-12);
}

// ------------------------------------------------------------------
// Dense engine vs reduced invariant-subspace engine.
// ------------------------------------------------------------------
TEST(Engines, DenseAndReducedAgree) {
    const double eps_hat = 0.04;
    const spansim::PhaseCheckSpec spec = spansim::make_phase_check_spec(0.3, 0.01);
    const spansim::PhaseCheckSpec fine = spansim::make_phase_check_spec(0.02, 1e-4);
    for (const auto& cvs : {make_identity_cvs(), make_xor_cvs()}) {
        const spansim::ConversionLayout lay = spansim::layout_of(cvs);
        std::vector<std::vector<std::uint64_t>> groups;
        for (std::uint64_t s = 1; s < cvs.dim_state; ++s)
            groups.push_back({lay.t_key(0, s), lay.t_key(1, s)});
        for (std::size_t x = 0; x < cvs.size(); ++x) {
            for (double alpha : {0.7, 2.0}) {
                const spansim::DenseConversionEngine dense(cvs, x, alpha, eps_hat);
                const spansim::ReducedConversionEngine reduced(cvs, x, alpha, eps_hat);

                EXPECT_LT(dense.unitarity_error(), 1e-9);
                EXPECT_LT(reduced.unitarity_error(), 1e-9);
                EXPECT_LT(dense.init_norm_error(), 1e-9);
                EXPECT_LT(reduced.init_norm_error(), 1e-9);
                EXPECT_LE(reduced.dim(),
                          static_cast<Eigen::Index>(2 * cvs.size() + 2));

                for (const auto& s : {spec, fine}) {
                    EXPECT_NEAR(dense.check_probability(s),
                                reduced.check_probability(s), 1e-9);
                    const Complex od = dense.target_overlap(s);
                    const Complex orr = reduced.target_overlap(s);
                    EXPECT_NEAR(od.real(), orr.real(), 1e-9);
                    EXPECT_NEAR(od.imag(), orr.imag(), 1e-9);
                    EXPECT_NEAR(dense.reflection_distance(s),
                                reduced.reflection_distance(s), 1e-5);

                    const std::vector<double> gd = dense.group_probabilities(groups, s);
                    const std::vector<double> gr =
                        reduced.group_probabilities(groups, s);
                    ASSERT_EQ(gd.size(), gr.size());
                    double total = 0.0;
                    for (std::size_t k = 0; k < gd.size(); ++k) {
                        EXPECT_NEAR(gd[k], gr[k], 1e-9);
                        total += gr[k];
                    }
                    EXPECT_LE(total, 1.0 + 1e-9);
                }
            }
        }
    }
}

TEST(Engines, LargeAlphaMakesCheckPassAndReflectionConvert) {
    const ConvertingVectorSet cvs = make_xor_cvs();
    const double eps_hat = 0.01;
    const spansim::WitnessSizes m = spansim::max_witness_sizes(cvs);
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        const double alpha = spansim::witness_sizes(cvs, x).w_plus;  // alpha >= w+(x)
        const double theta =
            std::pow(eps_hat, 1.5) / std::sqrt(alpha * m.w_minus);
        const spansim::PhaseCheckSpec spec =
            spansim::make_phase_check_spec(theta, eps_hat * eps_hat);
        const spansim::ReducedConversionEngine engine(cvs, x, alpha, eps_hat);
        // The symmetric combination t_{x+} carries the positive witness and
        // passes the check almost surely; the initial state |0>|rho_x> splits
        // evenly between t_{x+} (passes) and t_{x-} (fails), so its check
        // probability sits just below 1/2.
        EXPECT_GT(engine.plus_state_check_probability(spec), 1.0 - eps_hat);
        const double p = engine.check_probability(spec);
        EXPECT_GT(p, 0.5 - 2.5 * eps_hat);
        EXPECT_LT(p, 0.5 + 2.5 * eps_hat);
        EXPECT_LE(engine.reflection_distance(spec), 6.0 * std::sqrt(eps_hat));
    }
}

TEST(Engines, TernaryUsesDenseDispatchAndConverts) {
    const ConvertingVectorSet cvs = make_ternary_cvs();
    const double eps_hat = 0.01;
    const double alpha = 1.0;  // equals w+(x) and 1/W- here
    const double theta = std::pow(eps_hat, 1.5) / std::sqrt(alpha * 1.0);
    const spansim::PhaseCheckSpec spec =
        spansim::make_phase_check_spec(theta, eps_hat * eps_hat);
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        const spansim::ConversionEngine engine(cvs, x, alpha, eps_hat);
        EXPECT_LT(engine.unitarity_error(), 1e-9);
        EXPECT_GT(engine.plus_state_check_probability(spec), 1.0 - eps_hat);
        const double p = engine.check_probability(spec);
        EXPECT_GT(p, 0.5 - 2.5 * eps_hat);
        EXPECT_LT(p, 0.5 + 2.5 * eps_hat);
        EXPECT_LE(engine.reflection_distance(spec), 6.0 * std::sqrt(eps_hat));
    }
}

// ------------------------------------------------------------------
// Amplitude estimation model.
// ------------------------------------------------------------------
TEST(AmplitudeModel, CostFormula) {
    // ceil((50 / 0.25) * ln(log2(4) / 0.5)) = ceil(200 ln 4) = 278.
    EXPECT_EQ(spansim::amplitude_estimation_cost(0.25, 0.5), 278u);
    EXPECT_GT(spansim::amplitude_estimation_cost(1e-3, 1e-2),
              spansim::amplitude_estimation_cost(1e-2, 1e-2));
    EXPECT_GT(spansim::amplitude_estimation_cost(1e-3, 1e-3),
              spansim::amplitude_estimation_cost(1e-3, 1e-2));
}

TEST(AmplitudeModel, EstimateStaysInWindow) {
    spansim::Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const spansim::AmplitudeEstimate e =
            spansim::estimate_amplitude(0.5, 0.1, 1e-12, rng);
        EXPECT_GE(e.value, 0.4);
        EXPECT_LE(e.value, 0.6);
        EXPECT_GT(e.circuit_calls, 0u);
    }
    // Near the boundary the window is clipped to [0, 1].
    for (int trial = 0; trial < 200; ++trial) {
        const spansim::AmplitudeEstimate e =
            spansim::estimate_amplitude(0.02, 0.1, 1e-12, rng);
        EXPECT_GE(e.value, 0.0);
        EXPECT_LE(e.value, 0.12);
    }
}

// ------------------------------------------------------------------
// State conversion sweep.
// ------------------------------------------------------------------
TEST(StateConversion, ConvertsEveryXorInput) {
    const ConvertingVectorSet cvs = make_xor_cvs();
    spansim::StateConversionOptions opt;
    opt.eps = 0.25;
    opt.delta = 0.01;
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        spansim::Rng rng(1000 + static_cast<std::uint64_t>(x));
        const spansim::StateConversionResult res =
            spansim::run_state_conversion(cvs, x, opt, rng);
        EXPECT_FALSE(res.exhausted);
        EXPECT_LE(res.conversion_error, opt.eps);
        EXPECT_GT(res.ledger.oracle_queries, 0u);
        EXPECT_GE(res.ledger.rounds, 1u);
        EXPECT_EQ(res.ledger.phase_reflections, 1u);
    }
}

TEST(StateConversion, DeterministicGivenSeed) {
    const ConvertingVectorSet cvs = make_identity_cvs();
    spansim::StateConversionOptions opt;
    opt.eps = 0.3;
    opt.delta = 0.05;
    spansim::Rng rng_a(42);
    spansim::Rng rng_b(42);
    const auto a = spansim::run_state_conversion(cvs, 0, opt, rng_a);
    const auto b = spansim::run_state_conversion(cvs, 0, opt, rng_b);
    EXPECT_EQ(a.i_stop, b.i_stop);
    EXPECT_EQ(a.used_complement, b.used_complement);
    EXPECT_EQ(a.ledger.oracle_queries, b.ledger.oracle_queries);
    EXPECT_DOUBLE_EQ(a.last_estimate, b.last_estimate);
    EXPECT_DOUBLE_EQ(a.conversion_error, b.conversion_error);
}

TEST(StateConversion, TernaryDomainConverts) {
    const ConvertingVectorSet cvs = make_ternary_cvs();
    spansim::StateConversionOptions opt;
    opt.eps = 0.3;
    opt.delta = 0.05;
    spansim::Rng rng(9);
    const auto res = spansim::run_state_conversion(cvs, 2, opt, rng);
    EXPECT_FALSE(res.exhausted);
    EXPECT_LE(res.conversion_error, opt.eps);
}

// ------------------------------------------------------------------
// Verified evaluation sweep.
// ------------------------------------------------------------------
TEST(VerifiedEvaluation, EvaluatesXor) {
    const ConvertingVectorSet cvs = make_xor_cvs();
    spansim::EvaluationOptions opt;
    opt.delta = 0.25;
    spansim::VerifiedEvaluator eval(cvs, opt);
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        spansim::Rng rng(500 + static_cast<std::uint64_t>(x));
        const spansim::EvaluationResult res = eval.run(x, rng);
        EXPECT_FALSE(res.error);
        EXPECT_EQ(res.label_key, eval.expected_label(x));
        EXPECT_GE(res.ledger.verifier_queries, opt.verifier_queries);
        EXPECT_GT(res.ledger.oracle_queries, 0u);
    }
}

TEST(VerifiedEvaluation, RepeatedRunsAreOverwhelminglyCorrect) {
    const ConvertingVectorSet cvs = make_xor_cvs();
    spansim::EvaluationOptions opt;
    opt.delta = 0.25;
    spansim::VerifiedEvaluator eval(cvs, opt);
    int errors = 0;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        const std::size_t x = trial % cvs.size();
        spansim::Rng rng = spansim::derive_stream(333, trial);
        const spansim::EvaluationResult res = eval.run(x, rng);
        if (res.error)
            ++errors;
        else
            EXPECT_EQ(res.label_key, eval.expected_label(x));
    }
    EXPECT_LE(errors, 10);
}

TEST(VerifiedEvaluation, TernaryLabelsViaDenseEngine) {
    const ConvertingVectorSet cvs = make_ternary_cvs();
    spansim::EvaluationOptions opt;
    opt.delta = 0.2;
    spansim::VerifiedEvaluator eval(cvs, opt);
    for (std::size_t x = 0; x < cvs.size(); ++x) {
        spansim::Rng rng(77 + static_cast<std::uint64_t>(x));
        const spansim::EvaluationResult res = eval.run(x, rng);
        EXPECT_FALSE(res.error);
        EXPECT_EQ(res.label_key, 1 + static_cast<std::uint64_t>(x));
    }
}

TEST(VerifiedEvaluation, DeterministicAndCached) {
    const ConvertingVectorSet cvs = make_xor_cvs();
    spansim::EvaluationOptions opt;
    opt.delta = 0.3;
    spansim::VerifiedEvaluator eval(cvs, opt);
    spansim::Rng rng_a(4242);
    const auto a = eval.run(1, rng_a);
    spansim::Rng rng_b(4242);
    const auto b = eval.run(1, rng_b);  // second call hits the round cache
    EXPECT_EQ(a.error, b.error);
    EXPECT_EQ(a.label_key, b.label_key);
    EXPECT_EQ(a.i_stop, b.i_stop);
    EXPECT_EQ(a.ledger.oracle_queries, b.ledger.oracle_queries);
    EXPECT_EQ(a.ledger.verifier_queries, b.ledger.verifier_queries);
}

}  // namespace
