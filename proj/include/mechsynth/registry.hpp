// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mechsynth/baselines.hpp"
#include "mechsynth/error.hpp"
#include "mechsynth/fitness.hpp"

namespace mechsynth {

// A resolved builtin mechanism.
struct Builtin {
    std::string id;
    MechanismFn fn;
    // Set for rules whose facility count is fixed by their parameters.
    std::optional<std::size_t> fixed_k;
    bool strategyproof = true;
};

namespace detail {

template <typename T>
std::vector<T> parse_list(const std::string& args, const std::string& id) {
    std::vector<T> out;
    std::stringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            if constexpr (std::is_floating_point_v<T>) {
                out.push_back(std::stod(item, &used));
            } else {
                if (!item.empty() && item[0] == '-') throw std::invalid_argument("negative");
                out.push_back(static_cast<T>(std::stoul(item, &used)));
            }
            if (used != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("bad parameter '" + item + "' in builtin id: " + id);
        }
    }
    if (out.empty()) throw ConfigError("builtin needs at least one parameter: " + id);
    return out;
}

inline void require_k(std::size_t got, std::size_t want, const std::string& id) {
    if (got != want) {
        throw EvaluationError("runtime", id + " places " + std::to_string(want) + " facilities but K=" + std::to_string(got));
    }
}

}  // namespace detail

// Resolves ids such as "median", "weighted-median", "percentile:1,3",
// "dictator:0,4", "constant:0.25,0.75", "case-study", "nonsp". Ids under
// "test:" are pathological runners used to exercise the sandbox.
inline Builtin resolve_builtin(const std::string& id) {
    const auto colon = id.find(':');
    const std::string head = id.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : id.substr(colon + 1);
    Builtin b;
    b.id = id;
    if (id == "median") {
        b.fixed_k = 1;
        b.fn = [](std::span<const double> p, std::span<const double>, std::size_t K) {
            detail::require_k(K, 1, "median");
            const std::vector<double> unit(p.size(), 1.0);
            return median_rule(p, unit);
        };
    } else if (id == "weighted-median") {
        b.fixed_k = 1;
        b.fn = [](std::span<const double> p, std::span<const double> w, std::size_t K) {
            detail::require_k(K, 1, "weighted-median");
            return median_rule(p, w);
        };
    } else if (id == "case-study") {
        b.fixed_k = 2;
        b.fn = [](std::span<const double> p, std::span<const double> w, std::size_t K) {
            detail::require_k(K, 2, "case-study");
            return case_study_mechanism(p, w);
        };
        b.strategyproof = false;
    } else if (id == "nonsp") {
        b.fn = [](std::span<const double> p, std::span<const double> w, std::size_t K) { return nonsp_locations(p, w, K); };
        b.strategyproof = false;
    } else if (head == "percentile" && colon != std::string::npos) {
        PercentileRule rule{detail::parse_list<std::size_t>(args, id)};
        if (!std::is_sorted(rule.indices.begin(), rule.indices.end())) throw ConfigError("percentile indices must be non-decreasing: " + id);
        b.fixed_k = rule.indices.size();
        b.fn = [rule, id](std::span<const double> p, std::span<const double>, std::size_t K) {
            detail::require_k(K, rule.indices.size(), id);
            return apply_percentile(rule, p);
        };
    } else if (head == "dictator" && colon != std::string::npos) {
        DictatorialRule rule{detail::parse_list<std::size_t>(args, id)};
        b.fixed_k = rule.agents.size();
        b.fn = [rule, id](std::span<const double> p, std::span<const double>, std::size_t K) {
            detail::require_k(K, rule.agents.size(), id);
            return apply_dictatorial(rule, p);
        };
    } else if (head == "constant" && colon != std::string::npos) {
        ConstantRule rule{detail::parse_list<double>(args, id)};
        for (double x : rule.locations) {
            if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("constant locations must lie in [0,1]: " + id);
        }
        b.fixed_k = rule.locations.size();
        b.fn = [rule, id](std::span<const double>, std::span<const double>, std::size_t K) {
            detail::require_k(K, rule.locations.size(), id);
            return apply_constant(rule);
        };
    } else if (id == "test:sleep") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t) -> Locations {
            for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
        };
        b.strategyproof = false;
    } else if (id == "test:range") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t K) { return Locations(K, 1.5); };
    } else if (id == "test:nan") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t K) {
            return Locations(K, std::numeric_limits<double>::quiet_NaN());
        };
    } else if (id == "test:length") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t K) { return Locations(K + 1, 0.5); };
    } else if (id == "test:throw") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t) -> Locations {
            throw std::runtime_error("division by zero");
        };
    } else if (id == "test:garbage") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t K) { return Locations(K, 0.5); };
    } else if (id == "test:crash") {
        b.fn = [](std::span<const double>, std::span<const double>, std::size_t) -> Locations { std::abort(); };
    } else {
        throw ConfigError("unknown builtin mechanism: " + id);
    }
    return b;
}

inline bool is_builtin_id(const std::string& id) {
    try {
        resolve_builtin(id);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

inline std::unique_ptr<MechanismEvaluator> make_builtin_evaluator(const std::string& id) {
    return std::make_unique<FunctionEvaluator>(resolve_builtin(id).fn, Concurrency::concurrent);
}

inline constexpr std::string_view kBuiltinDirective = "# builtin:";

// Candidate source may delegate to a builtin when its first non-blank line
// is "# builtin: <id>".
inline std::optional<std::string> builtin_directive(const std::string& source) {
    std::istringstream in(source);
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line.compare(first, kBuiltinDirective.size(), kBuiltinDirective) != 0) return std::nullopt;
        std::string id = line.substr(first + kBuiltinDirective.size());
        const auto a = id.find_first_not_of(" \t");
        const auto b = id.find_last_not_of(" \t\r");
        if (a == std::string::npos) return std::nullopt;
        return id.substr(a, b - a + 1);
    }
    return std::nullopt;
}

// Python rendition of a builtin in the shape of the code template, with the
// delegation directive on its first line.
inline std::string builtin_source(const std::string& id, std::span<const double> weights = {}) {
    const Builtin b = resolve_builtin(id);
    std::string w = "[";
    for (std::size_t i = 0; i < weights.size(); ++i) w += (i ? ", " : "") + format_double(weights[i]);
    w += "]";
    std::string body;
    const auto colon = id.find(':');
    const std::string head = id.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : id.substr(colon + 1);
    if (id == "median") {
        body = "    s = sorted(samples)\n"
               "    locations = [s[(len(s) - 1) // 2]]\n";
    } else if (id == "weighted-median") {
        body = "    weights = " + w + "\n"
               "    pairs = sorted(zip(samples, weights), key=lambda p: p[0])\n"
               "    total = sum(weights)\n"
               "    cum = 0\n"
               "    for sample, weight in pairs:\n"
               "        cum += weight\n"
               "        if cum >= total / 2:\n"
               "            locations = [sample]\n"
               "            break\n";
    } else if (id == "case-study") {
        body = "    weights = " + w + "\n"
               "    weighted_samples = list(zip(samples, weights))\n"
               "    weighted_samples.sort()\n"
               "    mid_index = len(weighted_samples) // 2\n"
               "    group1 = weighted_samples[:mid_index]\n"
               "    group2 = weighted_samples[mid_index:]\n"
               "\n"
               "    def weighted_median(group):\n"
               "        total_weight = sum(weight for _, weight in group)\n"
               "        cum_weight = 0\n"
               "        for sample, weight in group:\n"
               "            cum_weight += weight\n"
               "            if cum_weight >= total_weight / 2:\n"
               "                return sample\n"
               "\n"
               "    locations = [weighted_median(group1), weighted_median(group2)]\n";
    } else if (head == "percentile") {
        body = "    s = sorted(samples)\n"
               "    locations = [s[i] for i in [" + args + "]]\n";
    } else if (head == "dictator") {
        body = "    locations = [samples[i] for i in [" + args + "]]\n";
    } else if (head == "constant") {
        body = "    locations = [" + args + "]\n";
    } else {
        body = "    raise NotImplementedError('" + id + "')\n";
    }
    return std::string(kBuiltinDirective) + " " + b.id + "\n" + "def get_locations(samples):\n" + body + "    return locations\n";
}

}  // namespace mechsynth
