// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "mechsynth/error.hpp"
#include "mechsynth/evolution.hpp"

namespace mechsynth {

// Keeps the event stream in memory (for tests and determinism checks).
class MemoryLog final : public RunObserver {
public:
    void on_event(const nlohmann::json& e) override {
        std::lock_guard lock(mu_);
        lines_.push_back(e.dump());
    }
    void on_generation(std::size_t, std::span<const MechanismRecord>, std::span<const PromptStrategy>, std::size_t) override {}

    const std::vector<std::string>& lines() const { return lines_; }
    std::string text() const {
        std::string out;
        for (const auto& l : lines_) out += l + "\n";
        return out;
    }

private:
    std::vector<std::string> lines_;
    std::mutex mu_;
};

// Run directory:
//   config.json                 exact configuration snapshot
//   events.jsonl                append-only event log
//   populations/gen_NNN.json    mechanism population after each generation
//   prompts/gen_NNN.json        prompt population after each generation
//   best.json, best_mechanism.py
class RunDirectory final : public RunObserver {
public:
    RunDirectory(std::filesystem::path root, const nlohmann::json& config) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_ / "populations", ec);
        std::filesystem::create_directories(root_ / "prompts", ec);
        if (ec) throw ConfigError("cannot create run directory " + root_.string() + ": " + ec.message());
        write_json(root_ / "config.json", config);
        events_.open(root_ / "events.jsonl", std::ios::out | std::ios::trunc);
        if (!events_) throw ConfigError("cannot open event log in " + root_.string());
    }

    void on_event(const nlohmann::json& e) override {
        std::lock_guard lock(mu_);
        events_ << e.dump() << '\n';
        events_.flush();
    }

    void on_generation(std::size_t generation, std::span<const MechanismRecord> population, std::span<const PromptStrategy> prompts,
                       std::size_t d) override {
        nlohmann::json pop = nlohmann::json::array();
        for (const auto& r : population) pop.push_back(to_json(r, false));
        nlohmann::json pr = nlohmann::json::array();
        for (const auto& p : prompts) pr.push_back(to_json(p, d));
        char name[32];
        std::snprintf(name, sizeof(name), "gen_%03zu.json", generation);
        write_json(root_ / "populations" / name, {{"generation", generation}, {"population", pop}});
        write_json(root_ / "prompts" / name, {{"generation", generation}, {"prompts", pr}});
    }

    void write_result(const EvolutionResult& res) {
        write_json(root_ / "best.json", {{"best", to_json(res.best, false)},
                                         {"best_trace", trace_json(res.best_trace)},
                                         {"prompt_evolution_generations", res.prompt_evolution_generations}});
        std::ofstream py(root_ / "best_mechanism.py");
        py << res.best.source << '\n';
    }

    const std::filesystem::path& root() const { return root_; }

    static void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
        std::ofstream out(p, std::ios::out | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + p.string());
        out << j.dump(2) << '\n';
    }

    static nlohmann::json trace_json(const std::vector<double>& trace) {
        nlohmann::json t = nlohmann::json::array();
        for (double f : trace) t.push_back(fitness_json(f));
        return t;
    }

private:
    std::filesystem::path root_;
    std::ofstream events_;
    std::mutex mu_;
};

// Fans events out to several observers.
class TeeObserver final : public RunObserver {
public:
    explicit TeeObserver(std::vector<RunObserver*> sinks) : sinks_(std::move(sinks)) {}
    void on_event(const nlohmann::json& e) override {
        for (auto* s : sinks_) s->on_event(e);
    }
    void on_generation(std::size_t g, std::span<const MechanismRecord> pop, std::span<const PromptStrategy> pr, std::size_t d) override {
        for (auto* s : sinks_) s->on_generation(g, pop, pr, d);
    }

private:
    std::vector<RunObserver*> sinks_;
};

}  // namespace mechsynth
