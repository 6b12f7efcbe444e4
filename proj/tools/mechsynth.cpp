// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

// mechsynth: dataset generation, mechanism evaluation, baseline tables,
// evolutionary search, regret audits and reports.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mechsynth/backend.hpp"
#include "mechsynth/bench.hpp"
#include "mechsynth/dataset_io.hpp"
#include "mechsynth/evolution.hpp"
#include "mechsynth/protocol.hpp"
#include "mechsynth/report.hpp"
#include "mechsynth/run_log.hpp"
#include "mechsynth/sandbox.hpp"

namespace fs = std::filesystem;
using namespace mechsynth;

namespace {

enum ExitCode : int { kOk = 0, kUnexpected = 1, kConfigError = 2, kEvaluationFailure = 3, kBackendFailure = 4 };

fs::path self_executable(const char* argv0) {
    std::error_code ec;
    auto p = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) return p;
    return fs::absolute(argv0);
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ConfigError("not a number list: " + text);
        }
    }
    return out;
}

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_file(path, text);
    }
}

// Shared flags for commands that evaluate a mechanism.
struct MechanismFlags {
    std::string builtin;
    std::string code;
    std::string runner;
    double timeout = 60.0;
    bool via_protocol = false;

    void add(CLI::App* cmd) {
        auto* b = cmd->add_option("--mechanism", builtin, "builtin mechanism id (median, percentile:1,3, case-study, ...)");
        auto* c = cmd->add_option("--code", code, "file with candidate mechanism source")->check(CLI::ExistingFile);
        b->excludes(c);
        cmd->add_option("--runner", runner, "command serving candidate code (\"--source <file>\" is appended)");
        cmd->add_option("--timeout", timeout, "wall-clock budget per fitness evaluation, seconds")->check(CLI::PositiveNumber);
        cmd->add_flag("--via-protocol", via_protocol, "evaluate builtins through the runner protocol");
    }

    std::string source() const {
        if (!builtin.empty()) {
            if (!is_builtin_id(builtin)) throw ConfigError("unknown builtin mechanism: " + builtin);
            return std::string(kBuiltinDirective) + " " + builtin;
        }
        if (!code.empty()) return read_file(code);
        throw ConfigError("one of --mechanism or --code is required");
    }

    EvaluatorOptions options(const fs::path& self) const {
        EvaluatorOptions o;
        o.sandbox.runner_executable = self;
        o.sandbox.external_runner = split_words(runner);
        o.eval_timeout = timeout;
        o.builtins_via_protocol = via_protocol;
        return o;
    }
};

ProblemSetting make_setting(std::size_t n, std::size_t K, const std::string& weights, const std::string& dist, double epsilon, std::size_t R,
                            std::size_t M) {
    ProblemSetting s;
    s.n = n;
    s.K = K;
    s.weights = weights.empty() ? WeightVector::uniform(n) : WeightVector(parse_doubles(weights));
    s.distribution = parse_distribution(dist);
    s.epsilon = epsilon;
    s.R = R;
    s.M = M;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path self = self_executable(argv[0]);
    CLI::App app{"Evolutionary synthesis and benchmarking of facility location mechanisms"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mechsynth 0.1.0");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a dataset of peaks and misreports");
    std::size_t g_n = 5, g_K = 1, g_R = 1000, g_M = 10;
    std::string g_weights, g_dist = "uniform", g_out;
    double g_eps = 0.0;
    std::uint64_t g_seed = 0;
    gen->add_option("--n", g_n, "agents")->check(CLI::PositiveNumber);
    gen->add_option("--K", g_K, "facilities")->check(CLI::PositiveNumber);
    gen->add_option("--R", g_R, "samples")->check(CLI::PositiveNumber);
    gen->add_option("--M", g_M, "misreports per agent per sample");
    gen->add_option("--weights", g_weights, "comma-separated agent weights (default all 1)");
    gen->add_option("--dist", g_dist, "uniform | normal | beta1 | beta2 | normal:MU,SIGMA | beta:A,B");
    gen->add_option("--epsilon", g_eps, "regret threshold");
    gen->add_option("--seed", g_seed, "master seed");
    gen->add_option("--out", g_out, "output file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate one mechanism's fitness on a dataset");
    std::string e_data, e_out;
    MechanismFlags e_mech;
    eval->add_option("--data", e_data, "dataset file")->required()->check(CLI::ExistingFile);
    e_mech.add(eval);
    eval->add_option("--out", e_out, "report file (default stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "baseline table: rules fitted on train, reported on test");
    std::string b_train, b_test, b_weights, b_dists = "uniform", b_ks = "1", b_weight_sets, b_csv, b_text, b_baselines, b_runner;
    std::vector<std::string> b_extra;
    std::size_t b_n = 5, b_R = 1000, b_M = 10;
    double b_eps = 0.0, b_timeout = 60.0;
    std::uint64_t b_seed = 0;
    bench->add_option("--train", b_train, "training dataset file")->check(CLI::ExistingFile);
    bench->add_option("--test", b_test, "test dataset file")->check(CLI::ExistingFile);
    bench->add_option("--n", b_n, "agents (generated datasets)")->check(CLI::PositiveNumber);
    bench->add_option("--weights", b_weights, "comma-separated weights (generated datasets)");
    bench->add_option("--weight-sets", b_weight_sets, "JSON fixture of weight sets; one block of rows per set of length n")
        ->check(CLI::ExistingFile);
    bench->add_option("--dists", b_dists, "comma-separated distributions");
    bench->add_option("--Ks", b_ks, "comma-separated facility counts");
    bench->add_option("--R", b_R, "samples per dataset");
    bench->add_option("--M", b_M, "misreports per agent");
    bench->add_option("--epsilon", b_eps, "regret threshold recorded with each row");
    bench->add_option("--seed", b_seed, "master seed; train and test streams are derived from it");
    bench->add_option("--baselines", b_baselines, "comma-separated subset of NonSP,Per.,Dict.,Cons.,Median,CaseStudy");
    bench->add_option("--extra", b_extra, "extra column NAME=builtin-id or NAME=@file");
    bench->add_option("--runner", b_runner, "command serving candidate code for --extra files");
    bench->add_option("--timeout", b_timeout, "budget per fitness evaluation, seconds");
    bench->add_option("--csv", b_csv, "CSV output file");
    bench->add_option("--text", b_text, "text table output (default stdout)");

    // evolve
    auto* evolve = app.add_subcommand("evolve", "run the evolutionary search");
    std::string v_data, v_test, v_config, v_script, v_backend, v_run_dir, v_runner;
    std::optional<std::uint64_t> v_seed;
    std::optional<std::size_t> v_gens, v_pop;
    std::optional<double> v_timeout;
    bool v_no_prompt_evolution = false;
    evolve->add_option("--data", v_data, "training dataset file")->required()->check(CLI::ExistingFile);
    evolve->add_option("--test", v_test, "optional test dataset for the final report")->check(CLI::ExistingFile);
    evolve->add_option("--config", v_config, "evolution config JSON")->check(CLI::ExistingFile);
    auto* script_opt = evolve->add_option("--script", v_script, "scripted backend responses (JSON)")->check(CLI::ExistingFile);
    auto* remote_opt = evolve->add_option("--backend", v_backend, "remote backend config JSON")->check(CLI::ExistingFile);
    script_opt->excludes(remote_opt);
    evolve->add_option("--run-dir", v_run_dir, "output run directory")->required();
    evolve->add_option("--runner", v_runner, "command serving candidate code (\"--source <file>\" is appended)");
    evolve->add_option("--seed", v_seed, "override seed");
    evolve->add_option("--generations", v_gens, "override T_e");
    evolve->add_option("--population", v_pop, "override N");
    evolve->add_option("--timeout", v_timeout, "override eval_timeout, seconds");
    evolve->add_flag("--no-prompt-evolution", v_no_prompt_evolution, "disable prompt evolution");

    // audit
    auto* audit = app.add_subcommand("audit", "grid or explicit misreport audit of a mechanism");
    std::string a_data, a_misreports, a_out;
    std::size_t a_grid = 100;
    MechanismFlags a_mech;
    audit->add_option("--data", a_data, "dataset file")->required()->check(CLI::ExistingFile);
    a_mech.add(audit);
    audit->add_option("--grid", a_grid, "grid resolution G: candidates {0, 1/G, ..., 1}")->check(CLI::PositiveNumber);
    audit->add_option("--misreports", a_misreports, "explicit comma-separated candidate misreports (overrides --grid)");
    audit->add_option("--out", a_out, "report file (default stdout)");

    // report
    auto* report = app.add_subcommand("report", "CSV and SVG plots from a run directory or bench CSVs");
    std::string r_run, r_reference, r_out;
    std::vector<std::string> r_bench;
    report->add_option("--run", r_run, "run directory")->check(CLI::ExistingDirectory);
    report->add_option("--bench", r_bench, "bench CSV files")->check(CLI::ExistingFile);
    report->add_option("--reference", r_reference, "reference column for net differences");
    report->add_option("--out", r_out, "output directory")->required();

    // runner
    auto* runner = app.add_subcommand("runner", "serve the runner protocol on stdin/stdout");
    std::string u_builtin, u_source;
    auto* ub = runner->add_option("--builtin", u_builtin, "builtin mechanism id");
    auto* us = runner->add_option("--source", u_source, "candidate source file");
    ub->excludes(us);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*gen) {
            const auto s = make_setting(g_n, g_K, g_weights, g_dist, g_eps, g_R, g_M);
            save_dataset(generate_dataset(s, g_seed), g_out);
            return kOk;
        }

        if (*eval) {
            const Dataset data = load_dataset(e_data);
            auto ev = make_evaluator(e_mech.source(), e_mech.options(self));
            const FitnessReport rep = evaluate_fitness(data, *ev);
            emit(e_out, to_json(rep).dump(2) + "\n");
            if (rep.failure) {
                std::cerr << "evaluation failed (" << rep.failure->kind << "): " << rep.failure->message << "\n";
                return kEvaluationFailure;
            }
            return kOk;
        }

        if (*bench) {
            BenchOptions opt;
            opt.eval.sandbox.runner_executable = self;
            opt.eval.sandbox.external_runner = split_words(b_runner);
            opt.eval.eval_timeout = b_timeout;
            if (!b_baselines.empty()) {
                opt.baselines.clear();
                std::stringstream ss(b_baselines);
                for (std::string name; std::getline(ss, name, ',');) {
                    if (std::find(all_baselines().begin(), all_baselines().end(), name) == all_baselines().end()) {
                        throw ConfigError("unknown baseline: " + name);
                    }
                    opt.baselines.push_back(name);
                }
            }
            for (const auto& x : b_extra) {
                const auto eq = x.find('=');
                if (eq == std::string::npos || eq == 0) throw ConfigError("--extra needs NAME=builtin-id or NAME=@file: " + x);
                const std::string what = x.substr(eq + 1);
                ExtraMechanism m{x.substr(0, eq), ""};
                if (!what.empty() && what[0] == '@') {
                    m.source = read_file(what.substr(1));
                } else {
                    if (!is_builtin_id(what)) throw ConfigError("unknown builtin mechanism: " + what);
                    m.source = std::string(kBuiltinDirective) + " " + what;
                }
                opt.extra.push_back(std::move(m));
            }

            std::vector<BenchRow> rows;
            if (!b_train.empty() || !b_test.empty()) {
                if (b_train.empty() || b_test.empty()) throw ConfigError("--train and --test go together");
                rows.push_back(bench_row(load_dataset(b_train), load_dataset(b_test), opt));
            } else {
                std::vector<std::string> weight_sets;
                if (!b_weight_sets.empty()) {
                    const auto j = nlohmann::json::parse(read_file(b_weight_sets));
                    const auto key = std::to_string(b_n);
                    if (!j.contains("sets") || !j["sets"].contains(key)) throw ConfigError("no weight sets for n=" + key);
                    for (const auto& set : j["sets"][key]) {
                        std::string w;
                        for (const auto& x : set) w += (w.empty() ? "" : ",") + format_double(x.get<double>());
                        weight_sets.push_back(w);
                    }
                } else {
                    weight_sets.push_back(b_weights);
                }
                std::vector<std::size_t> ks;
                for (double k : parse_doubles(b_ks)) ks.push_back(static_cast<std::size_t>(k));
                std::stringstream ds(b_dists);
                std::vector<std::string> dists;
                for (std::string d; std::getline(ds, d, ',');) dists.push_back(d);
                for (const auto& w : weight_sets) {
                    for (const auto& d : dists) {
                        const std::uint64_t train_seed = derive_seed(b_seed, "train:" + d);
                        const std::uint64_t test_seed = derive_seed(b_seed, "test:" + d);
                        for (std::size_t K : ks) {
                            const auto s = make_setting(b_n, K, w, d, b_eps, b_R, b_M);
                            rows.push_back(bench_row(generate_dataset(s, train_seed), generate_dataset(s, test_seed), opt));
                        }
                    }
                }
            }
            emit(b_text, bench_text_table(rows));
            if (!b_csv.empty()) write_file(b_csv, bench_csv(rows));
            return kOk;
        }

        if (*evolve) {
            const Dataset train = load_dataset(v_data);
            nlohmann::json cfg_json = v_config.empty() ? nlohmann::json::object() : nlohmann::json::parse(read_file(v_config));
            EvolutionConfig cfg = evolution_config_from_json(cfg_json.value("evolution", nlohmann::json::object()));
            if (v_seed) cfg.seed = *v_seed;
            if (v_gens) cfg.T_e = *v_gens;
            if (v_pop) cfg.N = *v_pop;
            if (v_timeout) cfg.eval_timeout = *v_timeout;
            if (v_no_prompt_evolution) cfg.prompt_evolution = false;
            cfg.validate();

            std::unique_ptr<Backend> backend;
            nlohmann::json backend_json;
            try {
                if (!v_script.empty()) {
                    backend = std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(v_script));
                    backend_json = {{"kind", "scripted"}, {"script", fs::absolute(v_script).string()}};
                } else {
                    RemoteBackendConfig rc = v_backend.empty() ? remote_config_from_json(cfg_json.value("backend", nlohmann::json::object()))
                                                               : remote_config_from_json(nlohmann::json::parse(read_file(v_backend)));
                    rc.temperature = cfg.temperature;
                    backend_json = to_json(rc);
                    backend_json["kind"] = "remote";
                    backend = std::make_unique<RemoteBackend>(rc);
                }
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("bad backend config: ") + e.what());
            }

            EvaluatorOptions eopt;
            eopt.sandbox.runner_executable = self;
            eopt.sandbox.external_runner = split_words(v_runner.empty() ? cfg_json.value("runner", std::string()) : v_runner);
            eopt.eval_timeout = cfg.eval_timeout;
            eopt.sandbox.stderr_log = fs::absolute(v_run_dir) / "runner_stderr.log";

            const nlohmann::json snapshot{{"evolution", to_json(cfg)},
                                          {"backend", backend_json},
                                          {"dataset", {{"path", fs::absolute(v_data).string()}, {"setting", to_json(train.setting)}, {"seed", train.seed}}},
                                          {"runner", v_runner.empty() ? cfg_json.value("runner", std::string()) : v_runner},
                                          {"timeout_semantics", "wall-clock cap per full fitness evaluation"}};
            RunDirectory dir(v_run_dir, snapshot);
            EvolutionEngine engine(cfg, train, *backend, [&](const std::string& src) { return make_evaluator(src, eopt); }, &dir);
            const EvolutionResult res = engine.run();
            dir.write_result(res);

            nlohmann::json summary{{"best_id", res.best.id}, {"best_description", res.best.description}, {"train", to_json(*res.best.report, false)}};
            if (!v_test.empty()) {
                const Dataset test = load_dataset(v_test);
                auto ev = make_evaluator(res.best.source, eopt);
                const auto rep = evaluate_fitness(test, *ev);
                summary["test"] = to_json(rep, false);
                RunDirectory::write_json(fs::path(v_run_dir) / "best_test.json", summary["test"]);
            }
            std::cout << summary.dump(2) << "\n";
            return kOk;
        }

        if (*audit) {
            const Dataset data = load_dataset(a_data);
            const auto candidates = a_misreports.empty() ? audit_grid(a_grid) : parse_doubles(a_misreports);
            for (double c : candidates) {
                if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("misreport candidates must lie in [0,1]");
            }
            auto ev = make_evaluator(a_mech.source(), a_mech.options(self));
            AuditReport rep;
            try {
                rep = audit_regret(data, *ev, candidates);
            } catch (const EvaluationError& e) {
                std::cerr << "evaluation failed (" << e.kind() << "): " << e.what() << "\n";
                return kEvaluationFailure;
            }
            nlohmann::json j = to_json(rep);
            j["candidates"] = candidates.size();
            emit(a_out, j.dump(2) + "\n");
            return kOk;
        }

        if (*report) {
            fs::create_directories(r_out);
            if (r_run.empty() && r_bench.empty()) throw ConfigError("report needs --run or --bench");
            if (!r_run.empty()) {
                const auto best = nlohmann::json::parse(read_file(fs::path(r_run) / "best.json"));
                std::vector<double> trace;
                std::string csv = "generation,best_fitness\n";
                for (std::size_t g = 0; g < best.at("best_trace").size(); ++g) {
                    const auto& v = best["best_trace"][g];
                    trace.push_back(v.is_null() ? kFailedFitness : v.get<double>());
                    csv += std::to_string(g) + "," + (v.is_null() ? std::string("inf") : format_double(trace.back())) + "\n";
                }
                write_file(fs::path(r_out) / "fitness_trace.csv", csv);
                write_file(fs::path(r_out) / "fitness_trace.svg", fitness_trace_plot(trace));
            }
            if (!r_bench.empty()) {
                if (r_reference.empty()) throw ConfigError("--bench needs --reference");
                std::vector<BenchRow> rows;
                for (const auto& f : r_bench) {
                    std::ifstream in(f);
                    auto part = parse_bench_csv(in);
                    rows.insert(rows.end(), part.begin(), part.end());
                }
                const auto d = net_differences(rows, r_reference);
                if (d.mechanisms.empty()) throw ConfigError("no rows contain reference column " + r_reference);
                write_file(fs::path(r_out) / "net_differences.csv", net_differences_csv(d));
                write_file(fs::path(r_out) / "net_differences.svg", net_difference_boxplot(d, r_reference));
                write_file(fs::path(r_out) / "epsilon_sweep.svg",
                           plot::lineplot(epsilon_sweep_series(d), "Mean net difference vs " + r_reference, "epsilon", "difference"));
            }
            return kOk;
        }

        if (*runner) {
            if (!u_builtin.empty()) return builtin_runner_main(u_builtin, std::cin, std::cout);
            if (!u_source.empty()) {
                std::cout << encode_handshake({false, RunnerError{"entry", "this binary serves builtins only; run candidate code with an external runner"}})
                          << "\n" << std::flush;
                return kConfigError;
            }
            throw ConfigError("runner needs --builtin or --source");
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kConfigError;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackendFailure;
    } catch (const EvaluationError& e) {
        std::cerr << "evaluation failed (" << e.kind() << "): " << e.what() << "\n";
        return kEvaluationFailure;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUnexpected;
    }
    return kOk;
}
