// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mechsynth/bench.hpp"
#include "mechsynth/plot.hpp"

namespace mechsynth {

// Per-mechanism net differences (mechanism minus reference) over every row
// where both entries evaluated successfully.
struct NetDifferences {
    std::vector<std::string> mechanisms;  // first-seen order
    std::map<std::string, std::vector<double>> cost;
    std::map<std::string, std::vector<double>> regret;
    std::map<std::string, std::vector<double>> epsilon;  // row epsilon per entry
};

inline NetDifferences net_differences(const std::vector<BenchRow>& rows, const std::string& reference) {
    NetDifferences out;
    for (const auto& r : rows) {
        const BenchCell* ref = r.find(reference);
        if (!ref || ref->failure) continue;
        for (const auto& c : r.cells) {
            if (c.mechanism == reference || c.failure) continue;
            if (!out.cost.contains(c.mechanism)) out.mechanisms.push_back(c.mechanism);
            out.cost[c.mechanism].push_back(c.test_cost - ref->test_cost);
            out.regret[c.mechanism].push_back(c.test_max_regret - ref->test_max_regret);
            out.epsilon[c.mechanism].push_back(r.epsilon);
        }
    }
    return out;
}

inline std::string net_differences_csv(const NetDifferences& d) {
    std::string out = "mechanism,epsilon,cost_difference,regret_difference\n";
    for (const auto& m : d.mechanisms) {
        const auto& c = d.cost.at(m);
        for (std::size_t i = 0; i < c.size(); ++i) {
            out += detail::csv_quote(m) + "," + format_double(d.epsilon.at(m)[i]) + "," + format_double(c[i]) + "," +
                   format_double(d.regret.at(m)[i]) + "\n";
        }
    }
    return out;
}

inline std::string net_difference_boxplot(const NetDifferences& d, const std::string& reference) {
    std::vector<std::pair<std::string, std::vector<double>>> groups;
    for (const auto& m : d.mechanisms) groups.emplace_back(m, d.cost.at(m));
    return plot::boxplot(groups, "Net difference in social cost vs " + reference, "cost difference");
}

// Mean net difference per epsilon value: solid lines for social cost,
// dashed for max regret.
inline std::vector<plot::Series> epsilon_sweep_series(const NetDifferences& d) {
    static const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    std::vector<plot::Series> out;
    for (std::size_t mi = 0; mi < d.mechanisms.size(); ++mi) {
        const auto& m = d.mechanisms[mi];
        std::map<double, std::pair<double, double>> sum;  // eps -> (cost, regret)
        std::map<double, int> count;
        const auto& eps = d.epsilon.at(m);
        for (std::size_t i = 0; i < eps.size(); ++i) {
            sum[eps[i]].first += d.cost.at(m)[i];
            sum[eps[i]].second += d.regret.at(m)[i];
            ++count[eps[i]];
        }
        plot::Series cost{m + " cost", {}, {}, palette[mi % palette.size()], false};
        plot::Series regret{m + " regret", {}, {}, palette[mi % palette.size()], true};
        for (const auto& [e, s] : sum) {
            cost.x.push_back(e);
            cost.y.push_back(s.first / count[e]);
            regret.x.push_back(e);
            regret.y.push_back(s.second / count[e]);
        }
        out.push_back(std::move(cost));
        out.push_back(std::move(regret));
    }
    return out;
}

inline std::string fitness_trace_plot(const std::vector<double>& trace) {
    plot::Series s{"best fitness", {}, {}, "black", false};
    for (std::size_t g = 0; g < trace.size(); ++g) {
        s.x.push_back(static_cast<double>(g));
        s.y.push_back(trace[g]);
    }
    return plot::lineplot({s}, "Best fitness per generation", "generation", "fitness");
}

}  // namespace mechsynth
