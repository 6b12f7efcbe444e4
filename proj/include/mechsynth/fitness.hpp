// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mechsynth/domain.hpp"
#include "mechsynth/error.hpp"

namespace mechsynth {

using Locations = std::vector<double>;

enum class Concurrency { serial, concurrent };

// A flat list of report profiles of equal length n.
class ProfileBatch {
public:
    explicit ProfileBatch(std::size_t n) : n_(n) {}

    void push(std::span<const double> profile) { reports_.insert(reports_.end(), profile.begin(), profile.end()); }

    // Appends `profile` with coordinate `agent` replaced by `value`.
    void push_substituted(std::span<const double> profile, std::size_t agent, double value) {
        const std::size_t at = reports_.size();
        push(profile);
        reports_[at + agent] = value;
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t size() const noexcept { return n_ == 0 ? 0 : reports_.size() / n_; }
    std::span<const double> operator[](std::size_t i) const {
        return std::span<const double>(reports_).subspan(i * n_, n_);
    }
    void reserve(std::size_t profiles) { reports_.reserve(profiles * n_); }

private:
    std::size_t n_;
    std::vector<double> reports_;
};

// Maps report profiles to K facility locations. Implementations are builtin
// rules (in-process) or runner subprocesses. Failures are reported by
// throwing EvaluationError.
class MechanismEvaluator {
public:
    virtual ~MechanismEvaluator() = default;

    virtual std::vector<Locations> evaluate_batch(const ProfileBatch& batch, std::span<const double> weights,
                                                  std::size_t K) = 0;

    virtual Concurrency concurrency() const { return Concurrency::serial; }
};

using MechanismFn = std::function<Locations(std::span<const double> peaks, std::span<const double> weights, std::size_t K)>;

// In-process evaluator around a plain function. A concurrent evaluator fans
// the batch out over threads; the result vector is filled by index so the
// output does not depend on scheduling.
class FunctionEvaluator final : public MechanismEvaluator {
public:
    explicit FunctionEvaluator(MechanismFn fn, Concurrency c = Concurrency::concurrent, unsigned max_threads = 0)
        : fn_(std::move(fn)), concurrency_(c), max_threads_(max_threads) {}

    std::vector<Locations> evaluate_batch(const ProfileBatch& batch, std::span<const double> weights,
                                          std::size_t K) override {
        const std::size_t count = batch.size();
        std::vector<Locations> out(count);
        unsigned threads = 1;
        if (concurrency_ == Concurrency::concurrent && count >= 4096) {
            threads = max_threads_ ? max_threads_ : std::max(1u, std::thread::hardware_concurrency());
            threads = std::min<unsigned>(threads, 16);
        }
        std::vector<std::optional<EvaluationError>> errors(threads);
        auto work = [&](unsigned t) {
            const std::size_t lo = count * t / threads, hi = count * (t + 1) / threads;
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    out[i] = fn_(batch[i], weights, K);
                } catch (const EvaluationError& e) {
                    errors[t].emplace(e.kind(), e.what(), static_cast<long>(i));
                    return;
                } catch (const std::exception& e) {
                    errors[t].emplace("runtime", e.what(), static_cast<long>(i));
                    return;
                }
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
        }
        for (auto& e : errors) {
            if (e) throw *e;  // lowest chunk first, so the reported index is deterministic
        }
        return out;
    }

    Concurrency concurrency() const override { return concurrency_; }

private:
    MechanismFn fn_;
    Concurrency concurrency_;
    unsigned max_threads_;
};

// Host-side output contract check: exactly K finite values in [0,1].
inline void validate_locations(const Locations& locs, std::size_t K, long index = -1) {
    if (locs.size() != K) {
        throw EvaluationError("length", "expected " + std::to_string(K) + " locations, got " + std::to_string(locs.size()),
                              index);
    }
    for (double x : locs) {
        if (std::isnan(x)) throw EvaluationError("nan", "location is NaN", index);
        if (!(x >= 0.0 && x <= 1.0)) throw EvaluationError("range", "location outside [0,1]: " + std::to_string(x), index);
    }
}

inline double agent_cost(double peak, std::span<const double> locations) {
    if (locations.empty()) throw std::invalid_argument("agent_cost: empty location list");
    double best = std::numeric_limits<double>::infinity();
    for (double x : locations) best = std::min(best, std::abs(x - peak));
    return best;
}

// Weighted social cost averaged over samples, normalized by R * sum(gamma).
inline double social_cost(const Dataset& data, std::span<const Locations> outputs, const WeightVector& weights) {
    const std::size_t R = data.samples(), n = data.agents();
    if (outputs.size() != R) throw std::invalid_argument("social_cost: need one output row per sample");
    if (weights.size() != n) throw std::invalid_argument("social_cost: weights length != n");
    double sum = 0.0;
    for (std::size_t j = 0; j < R; ++j) {
        for (std::size_t i = 0; i < n; ++i) sum += weights[i] * agent_cost(data.peak(j, i), outputs[j]);
    }
    return sum / (static_cast<double>(R) * weights.total());
}

// theta: 1 iff max regret strictly exceeds epsilon.
inline int theta(double max_regret, double epsilon) { return max_regret > epsilon ? 1 : 0; }

struct EvaluationFailure {
    std::string kind;
    std::string message;
    friend bool operator==(const EvaluationFailure&, const EvaluationFailure&) = default;
};

struct FitnessReport {
    double social_cost = 0.0;
    std::vector<double> regret_per_agent;
    double max_regret = 0.0;
    bool penalized = false;
    double fitness = 0.0;
    double eval_wall_time = 0.0;
    std::optional<EvaluationFailure> failure;

    bool failed() const noexcept { return failure.has_value(); }

    // Everything except wall time, which is not reproducible.
    bool same_result(const FitnessReport& o) const {
        return social_cost == o.social_cost && regret_per_agent == o.regret_per_agent && max_regret == o.max_regret &&
               penalized == o.penalized && fitness == o.fitness && failure == o.failure;
    }
};

inline constexpr double kFailedFitness = std::numeric_limits<double>::infinity();

inline FitnessReport failed_report(std::string kind, std::string message, double wall = 0.0) {
    FitnessReport r;
    r.fitness = kFailedFitness;
    r.social_cost = 0.0;
    r.penalized = false;
    r.eval_wall_time = wall;
    r.failure = EvaluationFailure{std::move(kind), std::move(message)};
    return r;
}

// JSON has no infinity; failed fitness is written as null.
inline nlohmann::json to_json(const FitnessReport& r, bool include_wall_time = true) {
    nlohmann::json j{
        {"social_cost", r.social_cost},
        {"regret_per_agent", r.regret_per_agent},
        {"max_regret", r.max_regret},
        {"penalized", r.penalized},
        {"fitness", std::isfinite(r.fitness) ? nlohmann::json(r.fitness) : nlohmann::json(nullptr)},
    };
    if (include_wall_time) j["eval_wall_time"] = r.eval_wall_time;
    if (r.failure) j["failure"] = {{"kind", r.failure->kind}, {"message", r.failure->message}};
    return j;
}

inline FitnessReport fitness_report_from_json(const nlohmann::json& j) {
    FitnessReport r;
    r.social_cost = j.at("social_cost").get<double>();
    r.regret_per_agent = j.at("regret_per_agent").get<std::vector<double>>();
    r.max_regret = j.at("max_regret").get<double>();
    r.penalized = j.at("penalized").get<bool>();
    r.fitness = j.at("fitness").is_null() ? kFailedFitness : j.at("fitness").get<double>();
    r.eval_wall_time = j.value("eval_wall_time", 0.0);
    if (j.contains("failure")) {
        r.failure = EvaluationFailure{j["failure"].at("kind").get<std::string>(), j["failure"].at("message").get<std::string>()};
    }
    return r;
}

namespace detail {

inline void check_outputs(std::span<const Locations> outs, std::size_t K) {
    for (std::size_t i = 0; i < outs.size(); ++i) validate_locations(outs[i], K, static_cast<long>(i));
}

// Invocation layout: [0, R) truthful profiles, then for sample j, agent i,
// misreport m the index R + (j*n + i)*M + m.
inline ProfileBatch regret_batch(const Dataset& data, std::span<const double> misreport_values, bool per_sample) {
    const std::size_t R = data.samples(), n = data.agents();
    const std::size_t M = per_sample ? data.misreports_per_agent() : misreport_values.size();
    ProfileBatch batch(n);
    batch.reserve(R * (1 + n * M));
    for (std::size_t j = 0; j < R; ++j) batch.push(data.profile(j));
    for (std::size_t j = 0; j < R; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t m = 0; m < M; ++m) {
                const double v = per_sample ? data.misreport(j, i, m) : misreport_values[m];
                batch.push_substituted(data.profile(j), i, v);
            }
        }
    }
    return batch;
}

inline std::string describe_invocation(const Dataset& data, long index, std::size_t M) {
    if (index < 0) return "";
    const auto R = static_cast<long>(data.samples());
    if (index < R) return " [sample " + std::to_string(index) + ", truthful]";
    const long rest = index - R;
    const long m = rest % static_cast<long>(M);
    const long i = (rest / static_cast<long>(M)) % static_cast<long>(data.agents());
    const long j = rest / static_cast<long>(M) / static_cast<long>(data.agents());
    return " [sample " + std::to_string(j) + ", agent " + std::to_string(i) + ", misreport " + std::to_string(m) + "]";
}

struct RegretTally {
    std::vector<double> per_agent;
    // worst single gain seen, with its coordinates
    double worst_gain = 0.0;
    std::size_t worst_sample = 0, worst_agent = 0, worst_misreport = 0;
};

inline RegretTally tally_regret(const Dataset& data, std::span<const Locations> outs, std::size_t M) {
    const std::size_t R = data.samples(), n = data.agents();
    RegretTally t;
    t.per_agent.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < R; ++j) {
            const double truth = data.peak(j, i);
            const double honest = agent_cost(truth, outs[j]);
            double best = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                const auto& lied = outs[R + (j * n + i) * M + m];
                const double gain = std::max(0.0, honest - agent_cost(truth, lied));
                if (gain > best) best = gain;
                if (gain > t.worst_gain) {
                    t.worst_gain = gain;
                    t.worst_sample = j;
                    t.worst_agent = i;
                    t.worst_misreport = m;
                }
            }
            sum += best;
        }
        t.per_agent[i] = sum / static_cast<double>(R);
    }
    return t;
}

}  // namespace detail

// rgt_i for every agent, measured against the dataset's own misreports. The
// cost after misreporting is taken at the agent's true peak.
inline std::vector<double> empirical_regret(const Dataset& data, MechanismEvaluator& eval) {
    const std::size_t M = data.misreports_per_agent();
    if (M == 0) throw std::invalid_argument("empirical_regret: dataset has no misreports");
    const auto batch = detail::regret_batch(data, {}, true);
    std::vector<Locations> outs;
    try {
        outs = eval.evaluate_batch(batch, data.setting.weights.values(), data.setting.K);
        detail::check_outputs(outs, data.setting.K);
    } catch (const EvaluationError& e) {
        throw EvaluationError(e.kind(), e.what() + detail::describe_invocation(data, e.index(), M), e.index());
    }
    return detail::tally_regret(data, outs, M).per_agent;
}

// Fitness q(f) = social cost + theta(max regret). Total evaluator invocations
// are R * (1 + n * M). Evaluator failures produce a report with `failure` set
// and infinite fitness.
inline FitnessReport evaluate_fitness(const Dataset& data, MechanismEvaluator& eval) {
    const std::size_t M = data.misreports_per_agent();
    if (M == 0) throw std::invalid_argument("evaluate_fitness: dataset has no misreports");
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    const auto batch = detail::regret_batch(data, {}, true);
    std::vector<Locations> outs;
    try {
        outs = eval.evaluate_batch(batch, data.setting.weights.values(), data.setting.K);
        if (outs.size() != batch.size()) {
            throw EvaluationError("protocol", "evaluator returned " + std::to_string(outs.size()) + " results for " +
                                                  std::to_string(batch.size()) + " requests");
        }
        detail::check_outputs(outs, data.setting.K);
    } catch (const EvaluationError& e) {
        return failed_report(e.kind(), e.what() + detail::describe_invocation(data, e.index(), M), elapsed());
    }

    FitnessReport r;
    r.social_cost = social_cost(data, std::span<const Locations>(outs).first(data.samples()), data.setting.weights);
    r.regret_per_agent = detail::tally_regret(data, outs, M).per_agent;
    r.max_regret = *std::max_element(r.regret_per_agent.begin(), r.regret_per_agent.end());
    r.penalized = theta(r.max_regret, data.setting.epsilon) == 1;
    r.fitness = r.social_cost + (r.penalized ? 1.0 : 0.0);
    r.eval_wall_time = elapsed();
    return r;
}

inline std::vector<double> audit_grid(std::size_t G) {
    if (G == 0) throw std::invalid_argument("audit grid resolution must be >= 1");
    std::vector<double> grid(G + 1);
    for (std::size_t k = 0; k <= G; ++k) grid[k] = static_cast<double>(k) / static_cast<double>(G);
    return grid;
}

struct AuditReport {
    std::vector<double> regret_per_agent;  // mean over samples of the best gain
    double max_regret = 0.0;
    double worst_gain = 0.0;  // single largest gain over all triples
    std::size_t worst_sample = 0;
    std::size_t worst_agent = 0;
    double worst_misreport = 0.0;
};

// Replaces the sampled misreports by a fixed list of candidate reports tried
// by every agent in every sample, and reports the worst triple.
inline AuditReport audit_regret(const Dataset& data, MechanismEvaluator& eval, std::span<const double> candidates) {
    if (candidates.empty()) throw std::invalid_argument("audit_regret: no candidate misreports");
    const auto batch = detail::regret_batch(data, candidates, false);
    auto outs = eval.evaluate_batch(batch, data.setting.weights.values(), data.setting.K);
    detail::check_outputs(outs, data.setting.K);
    const auto t = detail::tally_regret(data, outs, candidates.size());
    AuditReport a;
    a.regret_per_agent = t.per_agent;
    a.max_regret = *std::max_element(t.per_agent.begin(), t.per_agent.end());
    a.worst_gain = t.worst_gain;
    a.worst_sample = t.worst_sample;
    a.worst_agent = t.worst_agent;
    a.worst_misreport = candidates[t.worst_misreport];
    return a;
}

inline nlohmann::json to_json(const AuditReport& a) {
    return nlohmann::json{
        {"regret_per_agent", a.regret_per_agent},
        {"max_regret", a.max_regret},
        {"worst", {{"gain", a.worst_gain}, {"sample", a.worst_sample}, {"agent", a.worst_agent}, {"misreport", a.worst_misreport}}},
    };
}

}  // namespace mechsynth
