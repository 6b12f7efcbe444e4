// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and independent oracles for the test suites.

#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mechsynth/dataset_io.hpp"
#include "mechsynth/domain.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/sandbox.hpp"

namespace testing_support {

using namespace mechsynth;

inline ProblemSetting setting(std::size_t n, std::size_t K, std::vector<double> w = {}, std::size_t R = 1, std::size_t M = 1,
                              double eps = 0.0, const std::string& dist = "uniform") {
    ProblemSetting s;
    s.n = n;
    s.K = K;
    s.weights = w.empty() ? WeightVector::uniform(n) : WeightVector(std::move(w));
    s.distribution = parse_distribution(dist);
    s.epsilon = eps;
    s.R = R;
    s.M = M;
    return s;
}

// Dataset from explicit rows; misreports[j][i] is the list for agent i.
inline Dataset make_dataset(const std::vector<std::vector<double>>& peaks, const std::vector<std::vector<std::vector<double>>>& misreports,
                            std::vector<double> weights, std::size_t K, double eps = 0.0) {
    const std::size_t R = peaks.size(), n = peaks.front().size();
    const std::size_t M = misreports.empty() ? 0 : misreports.front().front().size();
    Dataset d;
    d.setting = setting(n, K, std::move(weights), R, M, eps);
    for (const auto& row : peaks) d.peaks.insert(d.peaks.end(), row.begin(), row.end());
    for (const auto& row : misreports) {
        for (const auto& cell : row) d.misreports.insert(d.misreports.end(), cell.begin(), cell.end());
    }
    d.validate();
    return d;
}

inline Dataset random_dataset(std::size_t n, std::size_t K, std::size_t R, std::size_t M, std::uint64_t seed, bool weighted = false,
                              const std::string& dist = "uniform") {
    std::vector<double> w;
    if (weighted) {
        std::mt19937_64 rng(seed ^ 0x5eed);
        std::uniform_int_distribution<int> pick(1, 5);
        for (std::size_t i = 0; i < n; ++i) w.push_back(pick(rng));
    }
    return generate_dataset(setting(n, K, w, R, M, 0.0, dist), seed);
}

// Straight transcription of the regret definition with no batching:
// one call per profile, misreported cost measured at the true peak.
inline std::vector<double> oracle_regret(const Dataset& d, const MechanismFn& f) {
    const std::size_t R = d.setting.R, n = d.setting.n, M = d.setting.M, K = d.setting.K;
    const auto w = d.setting.weights.values();
    std::vector<double> rgt(n, 0.0);
    for (std::size_t j = 0; j < R; ++j) {
        std::vector<double> prof(d.profile(j).begin(), d.profile(j).end());
        const auto honest = f(prof, w, K);
        for (std::size_t i = 0; i < n; ++i) {
            double best = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                auto lie = prof;
                lie[i] = d.misreport(j, i, m);
                const auto out = f(lie, w, K);
                double ch = 1e9, cl = 1e9;
                for (double x : honest) ch = std::min(ch, std::fabs(x - prof[i]));
                for (double x : out) cl = std::min(cl, std::fabs(x - prof[i]));
                best = std::max(best, ch - cl);
            }
            rgt[i] += best;
        }
    }
    for (double& r : rgt) r /= static_cast<double>(R);
    return rgt;
}

inline double oracle_social_cost(const Dataset& d, const MechanismFn& f) {
    const auto w = d.setting.weights.values();
    double num = 0.0, wsum = 0.0;
    for (double g : w) wsum += g;
    for (std::size_t j = 0; j < d.setting.R; ++j) {
        std::vector<double> prof(d.profile(j).begin(), d.profile(j).end());
        const auto out = f(prof, w, d.setting.K);
        for (std::size_t i = 0; i < prof.size(); ++i) {
            double c = 1e9;
            for (double x : out) c = std::min(c, std::fabs(x - prof[i]));
            num += w[i] * c;
        }
    }
    return num / (static_cast<double>(d.setting.R) * wsum);
}

// Counts invocations; delegates to a function.
class CountingEvaluator final : public MechanismEvaluator {
public:
    explicit CountingEvaluator(MechanismFn f) : f_(std::move(f)) {}
    std::vector<Locations> evaluate_batch(const ProfileBatch& b, std::span<const double> w, std::size_t K) override {
        std::vector<Locations> out;
        for (std::size_t i = 0; i < b.size(); ++i) {
            ++calls;
            out.push_back(f_(b[i], w, K));
        }
        return out;
    }
    std::size_t calls = 0;

private:
    MechanismFn f_;
};

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "mechsynth-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CommandResult {
    int exit_code = -1;
    std::string out;
};

// Runs a shell command, capturing stdout.
inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, got);
    const int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline SandboxConfig builtin_sandbox() {
    SandboxConfig c;
    c.runner_executable = MECHSYNTH_CLI_PATH;
    return c;
}

// Counterexample instance, one sample, optional misreports.
inline std::vector<double> case_study_peaks() { return {0.0, 1.0 / 13, 10.0 / 13, 11.0 / 13, 12.0 / 13, 1.0}; }
inline std::vector<double> case_study_weights() { return {5, 5, 5, 1, 1, 1}; }

}  // namespace testing_support
