// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mechsynth/domain.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/kmedian.hpp"

namespace mechsynth {

// First point, under a stable ascending sort, whose cumulative weight reaches
// half of the total weight.
inline double weighted_median(std::span<const double> points, std::span<const double> weights) {
    if (points.empty()) throw std::invalid_argument("weighted_median: empty input");
    if (points.size() != weights.size()) throw std::invalid_argument("weighted_median: length mismatch");
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double cum = 0.0;
    for (std::size_t i : order) {
        cum += weights[i];
        if (cum >= total / 2.0) return points[i];
    }
    return points[order.back()];
}

inline Locations median_rule(std::span<const double> peaks, std::span<const double> weights, std::size_t K = 1) {
    if (K != 1) throw std::invalid_argument("median rule places exactly one facility");
    return {weighted_median(peaks, weights)};
}

// Order-statistic indices into the ascending-sorted reports.
struct PercentileRule {
    std::vector<std::size_t> indices;
    friend bool operator==(const PercentileRule&, const PercentileRule&) = default;
};

// Agent identities whose reports become facilities.
struct DictatorialRule {
    std::vector<std::size_t> agents;
    friend bool operator==(const DictatorialRule&, const DictatorialRule&) = default;
};

struct ConstantRule {
    std::vector<double> locations;
    friend bool operator==(const ConstantRule&, const ConstantRule&) = default;
};

inline Locations apply_percentile(const PercentileRule& rule, std::span<const double> peaks) {
    std::vector<double> sorted(peaks.begin(), peaks.end());
    std::sort(sorted.begin(), sorted.end());
    Locations out;
    out.reserve(rule.indices.size());
    for (std::size_t idx : rule.indices) {
        if (idx >= sorted.size()) throw std::invalid_argument("percentile index out of range");
        out.push_back(sorted[idx]);
    }
    return out;
}

inline Locations apply_dictatorial(const DictatorialRule& rule, std::span<const double> peaks) {
    Locations out;
    out.reserve(rule.agents.size());
    for (std::size_t a : rule.agents) {
        if (a >= peaks.size()) throw std::invalid_argument("dictator index out of range");
        out.push_back(peaks[a]);
    }
    return out;
}

inline Locations apply_constant(const ConstantRule& rule) { return rule.locations; }

// Learned two-facility mechanism: sort (peak, weight) pairs, split at n/2 and
// place one facility at the weighted median of each half. Pairs compare
// lexicographically so equal peaks order by weight.
inline Locations case_study_mechanism(std::span<const double> peaks, std::span<const double> weights, std::size_t K = 2) {
    if (K != 2) throw std::invalid_argument("case-study mechanism places exactly two facilities");
    if (peaks.size() < 2) throw std::invalid_argument("case-study mechanism needs at least two agents");
    if (peaks.size() != weights.size()) throw std::invalid_argument("case-study mechanism: weights length != n");
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(peaks.size());
    for (std::size_t i = 0; i < peaks.size(); ++i) pairs.emplace_back(peaks[i], weights[i]);
    std::sort(pairs.begin(), pairs.end());
    const std::size_t mid = pairs.size() / 2;
    auto group_median = [](std::span<const std::pair<double, double>> group) {
        double total = 0.0;
        for (const auto& [p, w] : group) total += w;
        double cum = 0.0;
        for (const auto& [p, w] : group) {
            cum += w;
            if (cum >= total / 2.0) return p;
        }
        return group.back().first;
    };
    const std::span<const std::pair<double, double>> all(pairs);
    return {group_median(all.first(mid)), group_median(all.subspan(mid))};
}

// Per-profile optimum ignoring incentives.
inline Locations nonsp_locations(std::span<const double> peaks, std::span<const double> weights, std::size_t K) {
    return kmedian_1d(peaks, weights, K).locations;
}

// Mean per-sample optimal K-median cost, normalized by sum(gamma).
inline double nonsp_cost(const Dataset& data) {
    const auto w = data.setting.weights.values();
    const double total = data.setting.weights.total();
    double sum = 0.0;
    for (std::size_t j = 0; j < data.samples(); ++j) sum += kmedian_1d(data.profile(j), w, data.setting.K).cost / total;
    return sum / static_cast<double>(data.samples());
}

// All non-decreasing index vectors of length K over {0..n-1}, lexicographic.
inline std::vector<std::vector<std::size_t>> index_multisets(std::size_t n, std::size_t K) {
    std::vector<std::vector<std::size_t>> out;
    if (n == 0 || K == 0) return out;
    std::vector<std::size_t> cur(K, 0);
    for (;;) {
        out.push_back(cur);
        std::size_t pos = K;
        while (pos > 0 && cur[pos - 1] == n - 1) --pos;
        if (pos == 0) break;
        ++cur[pos - 1];
        for (std::size_t q = pos; q < K; ++q) cur[q] = cur[pos - 1];
    }
    return out;
}

namespace detail {

// Evaluates train cost for every candidate in parallel, then takes the first
// minimum in candidate order.
template <typename CostFn>
std::size_t argmin_parallel(std::size_t count, CostFn cost, std::vector<double>* costs_out = nullptr) {
    std::vector<double> costs(count);
    const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 16));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t c = t; c < count; c += threads) costs[c] = cost(c);
            });
        }
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < count; ++c) {
        if (costs[c] < costs[best]) best = c;
    }
    if (costs_out) *costs_out = std::move(costs);
    return best;
}

inline std::vector<double> sorted_profiles(const Dataset& data) {
    std::vector<double> out(data.peaks);
    const std::size_t n = data.agents();
    for (std::size_t j = 0; j < data.samples(); ++j) std::sort(out.begin() + j * n, out.begin() + (j + 1) * n);
    return out;
}

}  // namespace detail

// Weighted social cost of a report-driven rule on a dataset; `pick(j, k)`
// gives facility k for sample j.
template <typename Pick>
double rule_cost(const Dataset& data, std::size_t K, Pick pick) {
    const std::size_t n = data.agents(), R = data.samples();
    const auto& w = data.setting.weights;
    double sum = 0.0;
    for (std::size_t j = 0; j < R; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = data.peak(j, i);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) best = std::min(best, std::abs(pick(j, k) - p));
            sum += w[i] * best;
        }
    }
    return sum / (static_cast<double>(R) * w.total());
}

inline double percentile_cost(const Dataset& data, const PercentileRule& rule, const std::vector<double>& sorted) {
    const std::size_t n = data.agents();
    return rule_cost(data, rule.indices.size(), [&](std::size_t j, std::size_t k) { return sorted[j * n + rule.indices[k]]; });
}

inline double dictatorial_cost(const Dataset& data, const DictatorialRule& rule) {
    return rule_cost(data, rule.agents.size(), [&](std::size_t j, std::size_t k) { return data.peak(j, rule.agents[k]); });
}

inline double constant_cost(const Dataset& data, const ConstantRule& rule) {
    return rule_cost(data, rule.locations.size(), [&](std::size_t, std::size_t k) { return rule.locations[k]; });
}

inline PercentileRule best_percentile(const Dataset& train) {
    const auto cands = index_multisets(train.agents(), train.setting.K);
    const auto sorted = detail::sorted_profiles(train);
    const std::size_t best = detail::argmin_parallel(cands.size(), [&](std::size_t c) {
        return percentile_cost(train, PercentileRule{cands[c]}, sorted);
    });
    return PercentileRule{cands[best]};
}

inline DictatorialRule best_dictatorial(const Dataset& train) {
    const auto cands = index_multisets(train.agents(), train.setting.K);
    const std::size_t best = detail::argmin_parallel(cands.size(), [&](std::size_t c) {
        return dictatorial_cost(train, DictatorialRule{cands[c]});
    });
    return DictatorialRule{cands[best]};
}

// Report-independent optimum: K-median of the pooled training peaks, each
// weighted by its agent's gamma.
inline ConstantRule best_constant(const Dataset& train) {
    const std::size_t n = train.agents(), R = train.samples();
    std::vector<double> ws(R * n);
    for (std::size_t j = 0; j < R; ++j) {
        for (std::size_t i = 0; i < n; ++i) ws[j * n + i] = train.setting.weights[i];
    }
    return ConstantRule{kmedian_1d(train.peaks, ws, train.setting.K).locations};
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(xs[i]);
        } else {
            out += std::to_string(xs[i]);
        }
    }
    return out;
}

inline std::string builtin_id(const PercentileRule& r) { return "percentile:" + join_list(r.indices); }
inline std::string builtin_id(const DictatorialRule& r) { return "dictator:" + join_list(r.agents); }
inline std::string builtin_id(const ConstantRule& r) { return "constant:" + join_list(r.locations); }

}  // namespace mechsynth
