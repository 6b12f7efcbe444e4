// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include "mechsynth/baselines.hpp"
#include "mechsynth/sandbox.hpp"
#include "test_support.hpp"

using namespace mechsynth;
using testing_support::builtin_sandbox;
using testing_support::TempDir;

namespace {

Clock::time_point in_seconds(double s) {
    return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s));
}

std::vector<RunnerRequest> requests(std::size_t count, std::size_t n, std::size_t K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<RunnerRequest> out;
    for (std::size_t i = 0; i < count; ++i) {
        RunnerRequest r;
        r.id = 1000 + i;
        r.k = K;
        for (std::size_t a = 0; a < n; ++a) {
            r.peaks.push_back(u(rng));
            r.weights.push_back(1.0);
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Lower median, written out independently of the library.
double lower_median(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    return p[(p.size() - 1) / 2];
}

// Minimal external runner in sh: checks that the source file exists, refuses
// to start if a secret leaked into its environment, then answers every
// request with [0.5].
std::filesystem::path write_sh_runner(const TempDir& dir) {
    const auto path = dir / "runner.sh";
    std::ofstream(path) << R"(#!/bin/sh
[ "$1" = "--source" ] && [ -f "$2" ] || { echo '{"protocol_version":1,"ready":false,"error":{"kind":"entry","message":"no source"}}'; exit 2; }
if [ -n "$MECHSYNTH_SECRET_PROBE" ]; then
  echo '{"protocol_version":1,"ready":false,"error":{"kind":"entry","message":"secret visible"}}'; exit 2
fi
grep -q 'def get_locations' "$2" || { echo '{"protocol_version":1,"ready":false,"error":{"kind":"entry","message":"no entry point"}}'; exit 2; }
echo '{"protocol_version":1,"ready":true}'
while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  echo "{\"id\":$id,\"locations\":[0.5]}"
done
)";
    ::chmod(path.c_str(), 0755);
    return path;
}

}  // namespace

TEST(Protocol, RequestResponseRoundTrip) {
    RunnerRequest r{7, {0.1, 0.9}, {1, 2}, 2};
    const auto back = decode_request(encode_request(r));
    EXPECT_EQ(back.id, 7u);
    EXPECT_EQ(back.peaks, r.peaks);
    EXPECT_EQ(back.weights, r.weights);
    EXPECT_EQ(back.k, 2u);

    const auto ok = decode_response(R"({"id":3,"locations":[0.25,0.75]})");
    ASSERT_TRUE(ok.ok());
    EXPECT_EQ(*ok.locations, (Locations{0.25, 0.75}));
    const auto bad = decode_response(R"({"id":4,"error":{"kind":"runtime","message":"boom"}})");
    EXPECT_FALSE(bad.ok());
    EXPECT_EQ(bad.error->kind, "runtime");
    EXPECT_THROW(decode_response("not json"), EvaluationError);
    EXPECT_THROW(decode_response(R"({"locations":[0.5]})"), EvaluationError);
}

TEST(Protocol, Handshake) {
    const auto hs = decode_handshake(R"({"protocol_version":1,"ready":true})");
    EXPECT_TRUE(hs.ready);
    EXPECT_THROW(decode_handshake(R"({"protocol_version":2,"ready":true})"), EvaluationError);
    const auto no = decode_handshake(encode_handshake({false, RunnerError{"compile", "syntax"}}));
    EXPECT_FALSE(no.ready);
    EXPECT_EQ(no.error->kind, "compile");
}

TEST(BuiltinRunnerMain, InProcessLoopSurvivesBadLines) {
    std::istringstream in("{\"id\":1,\"peaks\":[0.2,0.4,0.9],\"weights\":[1,1,1],\"k\":1}\n"
                          "garbage\n"
                          "{\"id\":3,\"peaks\":[0.2],\"weights\":[1],\"k\":2}\n"
                          "{\"id\":4,\"peaks\":[0.7],\"weights\":[1],\"k\":1}\n");
    std::ostringstream out;
    EXPECT_EQ(builtin_runner_main("median", in, out), 0);
    std::istringstream lines(out.str());
    std::string l;
    std::getline(lines, l);
    EXPECT_TRUE(decode_handshake(l).ready);
    std::getline(lines, l);
    EXPECT_EQ(*decode_response(l).locations, Locations{0.4});
    std::getline(lines, l);
    EXPECT_EQ(decode_response(l).error->kind, "protocol");
    std::getline(lines, l);
    EXPECT_EQ(decode_response(l).error->kind, "runtime");
    std::getline(lines, l);
    EXPECT_EQ(*decode_response(l).locations, Locations{0.7});
}

TEST(RunnerHandle, MedianOverThousandRequests) {
    auto h = spawn_runner(RunnerKind::builtin, "median", builtin_sandbox());
    const auto reqs = requests(1000, 5, 1, 1);
    const auto resp = h.invoke_batch(reqs, in_seconds(30));
    ASSERT_EQ(resp.size(), 1000u);
    for (std::size_t i = 0; i < resp.size(); ++i) {
        ASSERT_TRUE(resp[i].ok()) << i;
        EXPECT_EQ(resp[i].id, reqs[i].id);
        EXPECT_EQ(*resp[i].locations, Locations{lower_median(reqs[i].peaks)});
    }
    EXPECT_TRUE(h.alive());
}

TEST(RunnerHandle, CaseStudyOnCounterexample) {
    auto h = spawn_runner(RunnerKind::builtin, "case-study", builtin_sandbox());
    RunnerRequest r{0, testing_support::case_study_peaks(), testing_support::case_study_weights(), 2};
    const auto resp = h.invoke_batch(std::vector<RunnerRequest>{r}, in_seconds(10));
    ASSERT_TRUE(resp[0].ok());
    ASSERT_EQ(resp[0].locations->size(), 2u);
    EXPECT_DOUBLE_EQ((*resp[0].locations)[0], 1.0 / 13);
    EXPECT_DOUBLE_EQ((*resp[0].locations)[1], 12.0 / 13);
}

TEST(RunnerHandle, MalformedRequestLeavesRunnerAlive) {
    auto h = spawn_runner(RunnerKind::builtin, "median", builtin_sandbox());
    auto resp = h.invoke_lines(
        2, [](std::size_t i, std::uint64_t id) {
            return i == 0 ? R"({"id":)" + std::to_string(id) + R"(,"peaks":"oops"})"
                          : encode_request({id, {0.3}, {1}, 1});
        },
        in_seconds(10));
    EXPECT_EQ(resp[0].error->kind, "protocol");
    EXPECT_EQ(*resp[1].locations, Locations{0.3});
    EXPECT_TRUE(h.alive());
}

TEST(RunnerHandle, UnknownBuiltinIsConfigError) {
    EXPECT_THROW(spawn_runner(RunnerKind::builtin, "no-such-rule", builtin_sandbox()), ConfigError);
}

TEST(RunnerHandle, SleepTimesOutAndFailsEveryPendingRequest) {
    auto h = spawn_runner(RunnerKind::builtin, "test:sleep", builtin_sandbox());
    const auto start = Clock::now();
    const auto resp = h.invoke_batch(requests(5, 3, 1, 2), in_seconds(0.3));
    EXPECT_LT(std::chrono::duration<double>(Clock::now() - start).count(), 5.0);
    for (const auto& r : resp) EXPECT_EQ(r.error->kind, "timeout");
    EXPECT_FALSE(h.alive());
    // a killed runner stays dead
    const auto again = h.invoke_batch(requests(2, 3, 1, 3), in_seconds(5));
    for (const auto& r : again) EXPECT_EQ(r.error->kind, "timeout");
}

TEST(RunnerHandle, CrashResolvesToCrash) {
    auto h = spawn_runner(RunnerKind::builtin, "test:crash", builtin_sandbox());
    const auto resp = h.invoke_batch(requests(3, 3, 1, 4), in_seconds(10));
    for (const auto& r : resp) EXPECT_EQ(r.error->kind, "crash");
    EXPECT_EQ(h.dead_reason(), "crash");
}

TEST(RunnerHandle, GarbageOutputIsProtocolError) {
    auto h = spawn_runner(RunnerKind::builtin, "test:garbage", builtin_sandbox());
    const auto resp = h.invoke_batch(requests(3, 3, 1, 5), in_seconds(10));
    for (const auto& r : resp) EXPECT_EQ(r.error->kind, "protocol");
    EXPECT_FALSE(h.alive());
}

TEST(RunnerHandle, TwoSpawnsAreIndependent) {
    auto a = spawn_runner(RunnerKind::builtin, "median", builtin_sandbox());
    auto b = spawn_runner(RunnerKind::builtin, "median", builtin_sandbox());
    a.kill("test");
    const auto resp = b.invoke_batch(std::vector<RunnerRequest>{{0, {0.1, 0.6, 0.8}, {1, 1, 1}, 1}}, in_seconds(10));
    EXPECT_EQ(*resp[0].locations, Locations{0.6});
    EXPECT_FALSE(a.alive());
    EXPECT_TRUE(b.alive());
}

TEST(RunnerEvaluator, RangeAndNanAndLengthAreRejected) {
    const auto d = testing_support::random_dataset(3, 1, 4, 2, 6);
    for (const auto& [id, kind] : std::vector<std::pair<std::string, std::string>>{
             {"test:range", "range"}, {"test:nan", "nan"}, {"test:length", "length"}, {"test:throw", "runtime"}}) {
        RunnerEvaluator ev(RunnerKind::builtin, id, builtin_sandbox(), 10.0);
        const auto rep = evaluate_fitness(d, ev);
        ASSERT_TRUE(rep.failed()) << id;
        EXPECT_EQ(rep.failure->kind, kind) << id;
        EXPECT_TRUE(std::isinf(rep.fitness));
    }
}

TEST(RunnerEvaluator, BudgetCoversWholeEvaluation) {
    const auto d = testing_support::random_dataset(3, 1, 4, 2, 7);
    RunnerEvaluator ev(RunnerKind::builtin, "test:sleep", builtin_sandbox(), 0.5);
    const auto start = Clock::now();
    const auto rep = evaluate_fitness(d, ev);
    EXPECT_EQ(rep.failure->kind, "timeout");
    EXPECT_LT(std::chrono::duration<double>(Clock::now() - start).count(), 5.0);
}

TEST(RunnerEvaluator, ProtocolMatchesInProcess) {
    for (const char* id : {"median", "weighted-median", "percentile:0,4", "dictator:2", "constant:0.3,0.6"}) {
        const std::size_t K = resolve_builtin(id).fixed_k.value_or(1);
        const auto d = testing_support::random_dataset(5, K, 30, 3, 8, true);
        RunnerEvaluator remote(RunnerKind::builtin, id, builtin_sandbox(), 30.0);
        auto local = make_builtin_evaluator(id);
        const auto a = evaluate_fitness(d, remote);
        const auto b = evaluate_fitness(d, *local);
        ASSERT_FALSE(a.failed()) << id << ": " << a.failure->message;
        EXPECT_TRUE(a.same_result(b)) << id;
    }
}

TEST(MakeEvaluator, DispatchesOnDirective) {
    EvaluatorOptions opt;
    opt.sandbox = builtin_sandbox();
    const auto d = testing_support::random_dataset(3, 1, 5, 2, 9);

    auto direct = make_evaluator(builtin_source("median"), opt);
    const double want = testing_support::oracle_social_cost(d, [](std::span<const double> p, std::span<const double>, std::size_t) {
        return Locations{lower_median(std::vector<double>(p.begin(), p.end()))};
    });
    EXPECT_NEAR(evaluate_fitness(d, *direct).fitness, want, 1e-15);

    auto unknown = make_evaluator("# builtin: nope\ndef get_locations(s): pass", opt);
    EXPECT_EQ(evaluate_fitness(d, *unknown).failure->kind, "entry");

    auto code = make_evaluator("def get_locations(samples):\n    return [0.5]\n", opt);
    EXPECT_EQ(evaluate_fitness(d, *code).failure->kind, "no-runner");

    // directive not on the first non-blank line is ordinary code
    auto late = make_evaluator("def get_locations(samples):\n    # builtin: median\n    return [0.5]\n", opt);
    EXPECT_EQ(evaluate_fitness(d, *late).failure->kind, "no-runner");
}

TEST(ExternalRunner, SpawnsWithSourceFileAndServesRequests) {
    TempDir tmp;
    auto cfg = builtin_sandbox();
    cfg.external_runner = {write_sh_runner(tmp).string()};
    const auto d = testing_support::random_dataset(3, 1, 5, 2, 10);
    RunnerEvaluator ev(RunnerKind::external_code, "def get_locations(samples):\n    return [0.5]\n", cfg, 20.0);
    const auto rep = evaluate_fitness(d, ev);
    ASSERT_FALSE(rep.failed()) << rep.failure->message;
    const auto want = testing_support::oracle_social_cost(d, [](std::span<const double>, std::span<const double>, std::size_t) {
        return Locations{0.5};
    });
    EXPECT_NEAR(rep.social_cost, want, 1e-15);
    EXPECT_EQ(rep.max_regret, 0.0);
}

TEST(ExternalRunner, EnvironmentIsScrubbed) {
    TempDir tmp;
    setenv("MECHSYNTH_SECRET_PROBE", "sk-should-not-leak", 1);
    auto cfg = builtin_sandbox();
    cfg.external_runner = {write_sh_runner(tmp).string()};
    EXPECT_NO_THROW(spawn_runner(RunnerKind::external_code, "def get_locations(s):\n    return [0.5]\n", cfg));
    unsetenv("MECHSYNTH_SECRET_PROBE");
}

TEST(ExternalRunner, HandshakeRefusalCarriesKind) {
    TempDir tmp;
    auto cfg = builtin_sandbox();
    cfg.external_runner = {write_sh_runner(tmp).string()};
    try {
        spawn_runner(RunnerKind::external_code, "print('no entry point')\n", cfg);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_EQ(e.kind(), "entry");
    }
}

TEST(ExternalRunner, CliRunnerSourceModeDeclinesCleanly) {
    auto cfg = builtin_sandbox();
    cfg.external_runner = {MECHSYNTH_CLI_PATH, "runner"};
    try {
        spawn_runner(RunnerKind::external_code, "def get_locations(s):\n    return [0.5]\n", cfg);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_EQ(e.kind(), "entry");
    }
}

TEST(ExternalRunner, MissingExecutableIsSpawnOrCrash) {
    auto cfg = builtin_sandbox();
    cfg.external_runner = {"/nonexistent/runner"};
    try {
        spawn_runner(RunnerKind::external_code, "def get_locations(s):\n    return [0.5]\n", cfg);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_TRUE(e.kind() == "spawn" || e.kind() == "crash") << e.kind();
    }
}

TEST(Jail, RemovedWithRunner) {
    std::filesystem::path jail;
    {
        auto h = spawn_runner(RunnerKind::builtin, "median", builtin_sandbox());
        jail = h.stderr_path().parent_path();
        EXPECT_TRUE(std::filesystem::exists(jail));
    }
    EXPECT_FALSE(std::filesystem::exists(jail));
}
