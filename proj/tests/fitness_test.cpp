// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mechsynth/baselines.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/registry.hpp"
#include "test_support.hpp"

using namespace mechsynth;
using namespace testing_support;

TEST(AgentCost, NearestFacility) {
    EXPECT_EQ(agent_cost(0.5, std::vector<double>{0.5}), 0.0);
    EXPECT_NEAR(agent_cost(10.0 / 13, std::vector<double>{1.0 / 13, 12.0 / 13}), 2.0 / 13, 1e-15);
    EXPECT_DOUBLE_EQ(agent_cost(0.3, std::vector<double>{0.0, 1.0}), 0.3);
    EXPECT_THROW(agent_cost(0.3, std::vector<double>{}), std::invalid_argument);
}

TEST(SocialCost, HandArithmetic) {
    const auto d1 = make_dataset({{0.0, 1.0}}, {}, {1, 1}, 1);
    std::vector<Locations> out{{0.5}};
    EXPECT_DOUBLE_EQ(social_cost(d1, out, d1.setting.weights), 0.5);

    const auto d2 = make_dataset({{0.2, 0.6}}, {}, {3, 1}, 1);
    out = {{0.2}};
    EXPECT_NEAR(social_cost(d2, out, d2.setting.weights), (3 * 0.0 + 1 * 0.4) / 4.0, 1e-15);

    // facility on every peak
    const auto d3 = make_dataset({{0.1, 0.7, 0.3}, {0.9, 0.2, 0.4}}, {}, {}, 3);
    out = {{0.1, 0.7, 0.3}, {0.9, 0.2, 0.4}};
    EXPECT_EQ(social_cost(d3, out, d3.setting.weights), 0.0);

    out = {{0.1, 0.7, 0.3}};
    EXPECT_THROW(social_cost(d3, out, d3.setting.weights), std::invalid_argument);
}

TEST(Theta, StrictInequality) {
    EXPECT_EQ(theta(0.0, 0.0), 0);
    EXPECT_EQ(theta(0.001, 0.0005), 1);
    EXPECT_EQ(theta(0.0005, 0.0005), 0);
}

TEST(EmpiricalRegret, MedianIsZero) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = random_dataset(5, 1, 200, 10, seed);
        auto ev = make_builtin_evaluator("median");
        const auto r = empirical_regret(d, *ev);
        for (double x : r) EXPECT_EQ(x, 0.0);
    }
}

TEST(EmpiricalRegret, CaseStudyCounterexample) {
    const auto peaks = case_study_peaks();
    std::vector<std::vector<double>> mis(6, std::vector<double>{peaks[0]});
    for (std::size_t i = 0; i < 6; ++i) mis[i] = {peaks[i]};  // truthful "misreports" for everyone else
    mis[2] = {11.5 / 13};
    const auto d = make_dataset({peaks}, {mis}, case_study_weights(), 2);
    auto ev = make_builtin_evaluator("case-study");
    const auto r = empirical_regret(d, *ev);
    ASSERT_EQ(r.size(), 6u);
    // 2/13 before, 1.5/13 after
    EXPECT_NEAR(r[2], 0.5 / 13, 1e-12);
    for (std::size_t i = 0; i < 6; ++i) {
        if (i != 2) EXPECT_EQ(r[i], 0.0) << "agent " << i;
    }
}

TEST(EmpiricalRegret, RequiresMisreports) {
    const auto d = make_dataset({{0.1, 0.2}}, {}, {}, 1);
    auto ev = make_builtin_evaluator("median");
    EXPECT_THROW(empirical_regret(d, *ev), std::invalid_argument);
    EXPECT_THROW(evaluate_fitness(d, *ev), std::invalid_argument);
}

TEST(EmpiricalRegret, MatchesDirectOracleOnManipulableRules) {
    // Mechanisms that are not strategyproof: compare against the unbatched definition.
    const MechanismFn mean_rule = [](std::span<const double> p, std::span<const double>, std::size_t) {
        double s = 0;
        for (double x : p) s += x;
        return Locations{s / static_cast<double>(p.size())};
    };
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto d = random_dataset(4, 1, 50, 6, seed, seed % 2 == 0);
        CountingEvaluator ev(mean_rule);
        const auto got = empirical_regret(d, ev);
        const auto want = oracle_regret(d, mean_rule);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
    const auto d = random_dataset(6, 2, 60, 5, 17, true);
    auto cs = resolve_builtin("case-study").fn;
    auto ev = make_builtin_evaluator("case-study");
    const auto got = empirical_regret(d, *ev);
    const auto want = oracle_regret(d, cs);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(EmpiricalRegret, MonotoneInMisreportSuperset) {
    const MechanismFn mean_rule = [](std::span<const double> p, std::span<const double>, std::size_t) {
        double s = 0;
        for (double x : p) s += x;
        return Locations{s / static_cast<double>(p.size())};
    };
    const auto big = random_dataset(4, 1, 40, 8, 3);
    Dataset small = big;
    small.setting.M = 3;
    small.misreports.clear();
    for (std::size_t j = 0; j < big.setting.R; ++j) {
        for (std::size_t i = 0; i < big.setting.n; ++i) {
            for (std::size_t m = 0; m < 3; ++m) small.misreports.push_back(big.misreport(j, i, m));
        }
    }
    CountingEvaluator e1(mean_rule), e2(mean_rule);
    const auto rs = empirical_regret(small, e1);
    const auto rb = empirical_regret(big, e2);
    for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_GE(rb[i], rs[i]);
}

TEST(EvaluateFitness, ConstantRuleOneSample) {
    const auto d = make_dataset({{0.0, 1.0}}, {{{0.3}, {0.9}}}, {1, 1}, 1);
    auto ev = make_builtin_evaluator("constant:0.5");
    const auto r = evaluate_fitness(d, *ev);
    EXPECT_DOUBLE_EQ(r.fitness, 0.5);
    EXPECT_EQ(r.max_regret, 0.0);
    EXPECT_FALSE(r.penalized);
}

TEST(EvaluateFitness, InvocationCount) {
    const auto d = random_dataset(5, 1, 30, 4, 2);
    CountingEvaluator ev(resolve_builtin("median").fn);
    evaluate_fitness(d, ev);
    EXPECT_EQ(ev.calls, 30u * (1 + 5 * 4));
}

TEST(EvaluateFitness, PenaltyAddsOne) {
    auto d = random_dataset(6, 2, 100, 5, 21, true);
    d.setting.epsilon = 0.0;
    auto ev = make_builtin_evaluator("nonsp");
    const auto r = evaluate_fitness(d, *ev);
    ASSERT_GT(r.max_regret, 0.0);
    EXPECT_TRUE(r.penalized);
    EXPECT_EQ(r.fitness, r.social_cost + 1.0);
    EXPECT_GT(r.fitness, 1.0);
    EXPECT_EQ(r.max_regret, *std::max_element(r.regret_per_agent.begin(), r.regret_per_agent.end()));
}

TEST(EvaluateFitness, WeightScalingInvariant) {
    auto d = random_dataset(5, 2, 80, 4, 5, true);
    auto scaled = d;
    std::vector<double> w(d.setting.weights.values().begin(), d.setting.weights.values().end());
    for (double& x : w) x *= 4.0;  // power of two keeps sums exact
    scaled.setting.weights = WeightVector(w);
    for (const char* id : {"case-study", "percentile:1,3", "nonsp"}) {
        auto e1 = make_builtin_evaluator(id);
        auto e2 = make_builtin_evaluator(id);
        const auto a = evaluate_fitness(d, *e1);
        const auto b = evaluate_fitness(scaled, *e2);
        EXPECT_NEAR(a.social_cost, b.social_cost, 1e-15) << id;
        EXPECT_EQ(a.max_regret, b.max_regret) << id;
        EXPECT_NEAR(a.fitness, b.fitness, 1e-15) << id;
    }
}

TEST(EvaluateFitness, RepeatableBitForBit) {
    const auto d = random_dataset(5, 2, 300, 10, 8, true);
    auto e1 = make_builtin_evaluator("case-study");
    auto e2 = make_builtin_evaluator("case-study");
    EXPECT_TRUE(evaluate_fitness(d, *e1).same_result(evaluate_fitness(d, *e2)));
}

TEST(EvaluateFitness, SocialCostAgreesWithOracle) {
    const auto d = random_dataset(5, 2, 200, 2, 13, true);
    auto ev = make_builtin_evaluator("case-study");
    const auto r = evaluate_fitness(d, *ev);
    EXPECT_NEAR(r.social_cost, oracle_social_cost(d, resolve_builtin("case-study").fn), 1e-14);
    EXPECT_GE(r.social_cost, 0.0);
    EXPECT_LE(r.social_cost, 1.0);
}

TEST(EvaluateFitness, FailuresBecomeInfiniteFitness) {
    const auto d = random_dataset(3, 1, 5, 2, 1);
    for (const auto& [id, kind] : std::vector<std::pair<std::string, std::string>>{
             {"test:range", "range"}, {"test:nan", "nan"}, {"test:length", "length"}, {"test:throw", "runtime"}}) {
        auto ev = make_builtin_evaluator(id);
        const auto r = evaluate_fitness(d, *ev);
        ASSERT_TRUE(r.failure.has_value()) << id;
        EXPECT_EQ(r.failure->kind, kind);
        EXPECT_TRUE(std::isinf(r.fitness));
    }
    // wrong K for a fixed-K rule
    auto ev = make_builtin_evaluator("case-study");
    const auto r = evaluate_fitness(d, *ev);
    ASSERT_TRUE(r.failure);
    EXPECT_EQ(r.failure->kind, "runtime");
}

TEST(EvaluateFitness, FailureCarriesCoordinates) {
    // Fails only on a misreported profile: sample 1, agent 2 gets value 0.77.
    const auto d = make_dataset({{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}}, {{{0.9}, {0.9}, {0.9}}, {{0.9}, {0.9}, {0.77}}}, {}, 1);
    const MechanismFn picky = [](std::span<const double> p, std::span<const double>, std::size_t) {
        if (p[2] == 0.77) throw std::runtime_error("boom");
        return Locations{p[0]};
    };
    FunctionEvaluator ev(picky, Concurrency::serial);
    const auto r = evaluate_fitness(d, ev);
    ASSERT_TRUE(r.failure);
    EXPECT_NE(r.failure->message.find("sample 1, agent 2, misreport 0"), std::string::npos) << r.failure->message;
}

TEST(FitnessReport, JsonRoundTrip) {
    const auto d = random_dataset(4, 2, 20, 3, 4, true);
    auto ev = make_builtin_evaluator("case-study");
    const auto r = evaluate_fitness(d, *ev);
    EXPECT_TRUE(fitness_report_from_json(to_json(r)).same_result(r));
    const auto f = failed_report("timeout", "too slow");
    const auto j = to_json(f);
    EXPECT_TRUE(j["fitness"].is_null());
    EXPECT_TRUE(fitness_report_from_json(j).same_result(f));
}

TEST(FunctionEvaluator, ConcurrentMatchesSerial) {
    const auto d = random_dataset(5, 2, 400, 10, 6, true);
    const auto fn = resolve_builtin("case-study").fn;
    FunctionEvaluator serial(fn, Concurrency::serial), conc(fn, Concurrency::concurrent, 8);
    EXPECT_TRUE(evaluate_fitness(d, serial).same_result(evaluate_fitness(d, conc)));
}

TEST(Audit, GridAndWorstTriple) {
    const auto g = audit_grid(4);
    EXPECT_EQ(g, (std::vector<double>{0, 0.25, 0.5, 0.75, 1.0}));
    EXPECT_THROW(audit_grid(0), std::invalid_argument);

    const auto d = make_dataset({case_study_peaks()}, {std::vector<std::vector<double>>(6, {0.0})}, case_study_weights(), 2);
    auto ev = make_builtin_evaluator("case-study");
    const std::vector<double> cand{11.5 / 13};
    const auto a = audit_regret(d, *ev, cand);
    EXPECT_EQ(a.worst_agent, 2u);
    EXPECT_NEAR(a.worst_gain, 0.5 / 13, 1e-12);
    EXPECT_EQ(a.worst_misreport, 11.5 / 13);

    auto med = make_builtin_evaluator("median");
    const auto dm = random_dataset(5, 1, 50, 1, 3);
    EXPECT_EQ(audit_regret(dm, *med, audit_grid(100)).worst_gain, 0.0);
}
