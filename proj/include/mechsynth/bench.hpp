// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mechsynth/baselines.hpp"
#include "mechsynth/domain.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/registry.hpp"
#include "mechsynth/sandbox.hpp"

namespace mechsynth {

struct BenchCell {
    std::string mechanism;  // column label
    std::string rule;       // builtin id or source tag
    double train_cost = 0.0;
    double test_cost = 0.0;
    double train_max_regret = 0.0;
    double test_max_regret = 0.0;
    std::optional<std::string> failure;
};

struct BenchRow {
    std::string distribution;
    std::size_t n = 0;
    std::size_t K = 0;
    std::vector<double> weights;
    double epsilon = 0.0;
    std::uint64_t train_seed = 0;
    std::uint64_t test_seed = 0;
    std::vector<BenchCell> cells;

    const BenchCell* find(const std::string& mechanism) const {
        for (const auto& c : cells) {
            if (c.mechanism == mechanism) return &c;
        }
        return nullptr;
    }
};

struct ExtraMechanism {
    std::string name;
    std::string source;  // builtin directive or candidate code
};

inline const std::vector<std::string>& all_baselines() {
    static const std::vector<std::string> names{"NonSP", "Per.", "Dict.", "Cons.", "Median", "CaseStudy"};
    return names;
}

struct BenchOptions {
    std::vector<std::string> baselines = all_baselines();
    std::vector<ExtraMechanism> extra;
    EvaluatorOptions eval;
};

namespace detail {

inline void fill_cell(BenchCell& c, const Dataset& train, const Dataset& test, const std::string& source, const EvaluatorOptions& opt) {
    auto ev_train = make_evaluator(source, opt);
    const FitnessReport tr = evaluate_fitness(train, *ev_train);
    auto ev_test = make_evaluator(source, opt);
    const FitnessReport te = evaluate_fitness(test, *ev_test);
    if (tr.failure || te.failure) {
        c.failure = (tr.failure ? tr.failure : te.failure)->kind;
        c.train_cost = c.test_cost = kFailedFitness;
        c.train_max_regret = c.test_max_regret = kFailedFitness;
        return;
    }
    c.train_cost = tr.social_cost;
    c.test_cost = te.social_cost;
    c.train_max_regret = tr.max_regret;
    c.test_max_regret = te.max_regret;
}

}  // namespace detail

// One table row: handcrafted rules fitted on `train`, every number also
// reported on `test`. Regret is evaluated on each dataset's own misreports.
inline BenchRow bench_row(const Dataset& train, const Dataset& test, const BenchOptions& opt) {
    const auto& s = train.setting;
    if (s.n != test.setting.n || s.K != test.setting.K) throw ConfigError("train and test datasets have different shapes");
    BenchRow row;
    row.distribution = s.distribution.label;
    row.n = s.n;
    row.K = s.K;
    row.weights.assign(s.weights.values().begin(), s.weights.values().end());
    row.epsilon = s.epsilon;
    row.train_seed = train.seed;
    row.test_seed = test.seed;

    auto want = [&](const std::string& name) { return std::find(opt.baselines.begin(), opt.baselines.end(), name) != opt.baselines.end(); };
    auto add = [&](const std::string& name, const std::string& id) {
        BenchCell c;
        c.mechanism = name;
        c.rule = id;
        detail::fill_cell(c, train, test, std::string(kBuiltinDirective) + " " + id, EvaluatorOptions{opt.eval.sandbox, opt.eval.eval_timeout, false});
        row.cells.push_back(std::move(c));
    };

    if (want("NonSP")) add("NonSP", "nonsp");
    if (want("Per.")) add("Per.", builtin_id(best_percentile(train)));
    if (want("Dict.")) add("Dict.", builtin_id(best_dictatorial(train)));
    if (want("Cons.")) add("Cons.", builtin_id(best_constant(train)));
    if (want("Median") && s.K == 1) add("Median", s.weights.is_unit() ? "median" : "weighted-median");
    if (want("CaseStudy") && s.K == 2 && s.n >= 2) add("CaseStudy", "case-study");
    for (const auto& x : opt.extra) {
        BenchCell c;
        c.mechanism = x.name;
        c.rule = builtin_directive(x.source).value_or("code");
        detail::fill_cell(c, train, test, x.source, opt.eval);
        row.cells.push_back(std::move(c));
    }
    return row;
}

inline std::string format_cell_value(double v) {
    if (!std::isfinite(v)) return "fail";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.5f", v);
    return buf;
}

// Text layout: one line per (distribution, K); each entry is the test cost,
// with the test max regret in parentheses when it is nonzero.
inline std::string bench_text_table(const std::vector<BenchRow>& rows) {
    std::vector<std::string> cols;
    for (const auto& r : rows) {
        for (const auto& c : r.cells) {
            if (std::find(cols.begin(), cols.end(), c.mechanism) == cols.end()) cols.push_back(c.mechanism);
        }
    }
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{"dist", "K"};
    head.insert(head.end(), cols.begin(), cols.end());
    grid.push_back(head);
    for (const auto& r : rows) {
        std::vector<std::string> line{r.distribution, std::to_string(r.K)};
        for (const auto& name : cols) {
            const BenchCell* c = r.find(name);
            if (!c) {
                line.push_back("-");
                continue;
            }
            std::string v = format_cell_value(c->test_cost);
            if (std::isfinite(c->test_max_regret) && c->test_max_regret > 0.0) v += " (" + format_cell_value(c->test_max_regret) + ")";
            line.push_back(v);
        }
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::string out;
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out += line[i];
            if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string("inf"); }

inline double csv_parse_number(const std::string& s) {
    if (s == "inf") return kFailedFitness;
    return std::stod(s);
}

}  // namespace detail

inline constexpr std::string_view kBenchCsvHeader =
    "distribution,n,K,weights,epsilon,train_seed,test_seed,mechanism,rule,train_cost,test_cost,train_max_regret,test_max_regret,failure";

// Long format: one line per (row, mechanism). Weights are space-separated.
inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out(kBenchCsvHeader);
    out += '\n';
    for (const auto& r : rows) {
        std::string w;
        for (std::size_t i = 0; i < r.weights.size(); ++i) w += (i ? " " : "") + format_double(r.weights[i]);
        for (const auto& c : r.cells) {
            const std::vector<std::string> f{r.distribution,
                                             std::to_string(r.n),
                                             std::to_string(r.K),
                                             w,
                                             format_double(r.epsilon),
                                             std::to_string(r.train_seed),
                                             std::to_string(r.test_seed),
                                             c.mechanism,
                                             c.rule,
                                             detail::csv_number(c.train_cost),
                                             detail::csv_number(c.test_cost),
                                             detail::csv_number(c.train_max_regret),
                                             detail::csv_number(c.test_max_regret),
                                             c.failure.value_or("")};
            for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + detail::csv_quote(f[i]);
            out += '\n';
        }
    }
    return out;
}

inline std::vector<BenchRow> parse_bench_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kBenchCsvHeader) throw ConfigError("not a bench CSV (unexpected header)");
    std::vector<BenchRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::csv_split(line);
        if (f.size() != 14) throw ConfigError("bench CSV line " + std::to_string(lineno) + ": expected 14 fields");
        try {
            BenchRow key;
            key.distribution = f[0];
            key.n = std::stoul(f[1]);
            key.K = std::stoul(f[2]);
            std::istringstream ws(f[3]);
            for (double w; ws >> w;) key.weights.push_back(w);
            key.epsilon = std::stod(f[4]);
            key.train_seed = std::stoull(f[5]);
            key.test_seed = std::stoull(f[6]);
            if (rows.empty() || rows.back().distribution != key.distribution || rows.back().K != key.K || rows.back().n != key.n ||
                rows.back().weights != key.weights || rows.back().epsilon != key.epsilon || rows.back().test_seed != key.test_seed) {
                rows.push_back(key);
            }
            BenchCell c;
            c.mechanism = f[7];
            c.rule = f[8];
            c.train_cost = detail::csv_parse_number(f[9]);
            c.test_cost = detail::csv_parse_number(f[10]);
            c.train_max_regret = detail::csv_parse_number(f[11]);
            c.test_max_regret = detail::csv_parse_number(f[12]);
            if (!f[13].empty()) c.failure = f[13];
            rows.back().cells.push_back(std::move(c));
        } catch (const std::logic_error& e) {
            throw ConfigError("bench CSV line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace mechsynth
