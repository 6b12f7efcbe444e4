// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mechsynth/backend.hpp"
#include "mechsynth/domain.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/parse.hpp"
#include "mechsynth/prompts.hpp"
#include "mechsynth/registry.hpp"
#include "mechsynth/rng.hpp"

namespace mechsynth {

struct MechanismRecord {
    std::string id;
    std::string description;
    std::string source;
    std::vector<std::string> parent_ids;
    std::string prompt_id;
    std::optional<FitnessReport> report;
    std::size_t generation_born = 0;
    std::uint64_t seq = 0;  // creation order; older records win fitness ties

    double fitness() const { return report ? report->fitness : kFailedFitness; }
};

struct PromptStrategy {
    std::string id;
    PromptKind kind = PromptKind::exploration;
    std::string text;
    std::vector<double> offspring_fitnesses;  // finite fitnesses only
    std::size_t generation_born = 0;
    std::uint64_t seq = 0;

    // Mean of the best `d` offspring fitnesses; empty until one valid offspring.
    std::optional<double> fitness(std::size_t d) const {
        if (offspring_fitnesses.empty()) return std::nullopt;
        std::vector<double> f = offspring_fitnesses;
        std::sort(f.begin(), f.end());
        const std::size_t take = std::min(d, f.size());
        return std::accumulate(f.begin(), f.begin() + static_cast<long>(take), 0.0) / static_cast<double>(take);
    }
};

struct EvolutionConfig {
    std::size_t N = 16;          // population size
    std::size_t T_e = 20;        // generations
    std::size_t b = 3;           // elite size watched for stagnation
    std::size_t T_p = 3;         // stagnation patience, generations
    std::size_t d = 3;           // offspring averaged into prompt fitness
    std::size_t N_p = 5;         // prompt population size
    double temperature = 1.0;
    double eval_timeout = 60.0;  // seconds per full fitness evaluation
    std::uint64_t seed = 0;
    bool prompt_evolution = true;
    std::size_t init_retries = 3;
    unsigned eval_workers = 0;   // 0: hardware concurrency

    void validate() const {
        if (N < 2) throw ConfigError("population size N must be >= 2");
        if (!(b < N)) throw ConfigError("elite size b must be < N");
        if (T_e < 1) throw ConfigError("T_e must be >= 1");
        if (!(T_p < T_e)) throw ConfigError("T_p must be < T_e");
        if (N_p < 2) throw ConfigError("N_p must be >= 2");
        if (d < 1) throw ConfigError("d must be >= 1");
        if (!(eval_timeout > 0.0)) throw ConfigError("eval_timeout must be > 0");
    }
};

inline nlohmann::json to_json(const EvolutionConfig& c) {
    return {{"N", c.N},
            {"T_e", c.T_e},
            {"b", c.b},
            {"T_p", c.T_p},
            {"d", c.d},
            {"N_p", c.N_p},
            {"temperature", c.temperature},
            {"eval_timeout", c.eval_timeout},
            {"seed", c.seed},
            {"prompt_evolution", c.prompt_evolution},
            {"init_retries", c.init_retries}};
}

inline EvolutionConfig evolution_config_from_json(const nlohmann::json& j) {
    EvolutionConfig c;
    c.N = j.value("N", c.N);
    c.T_e = j.value("T_e", c.T_e);
    c.b = j.value("b", c.b);
    c.T_p = j.value("T_p", c.T_p);
    c.d = j.value("d", c.d);
    c.N_p = j.value("N_p", c.N_p);
    c.temperature = j.value("temperature", c.temperature);
    c.eval_timeout = j.value("eval_timeout", c.eval_timeout);
    c.seed = j.value("seed", c.seed);
    c.prompt_evolution = j.value("prompt_evolution", c.prompt_evolution);
    c.init_retries = j.value("init_retries", c.init_retries);
    return c;
}

inline nlohmann::json fitness_json(double f) { return std::isfinite(f) ? nlohmann::json(f) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const MechanismRecord& r, bool include_wall_time = true) {
    nlohmann::json j{{"id", r.id},
                     {"description", r.description},
                     {"source", r.source},
                     {"parent_ids", r.parent_ids},
                     {"prompt_id", r.prompt_id},
                     {"generation_born", r.generation_born},
                     {"fitness", fitness_json(r.fitness())}};
    j["report"] = r.report ? to_json(*r.report, include_wall_time) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const PromptStrategy& p, std::size_t d) {
    const auto f = p.fitness(d);
    return {{"id", p.id},
            {"kind", to_string(p.kind)},
            {"text", p.text},
            {"offspring_fitnesses", p.offspring_fitnesses},
            {"fitness", f ? nlohmann::json(*f) : nlohmann::json(nullptr)},
            {"generation_born", p.generation_born}};
}

// Positions of `keys` sorted ascending, ties by original position.
inline std::vector<std::size_t> rank_order(std::span<const double> keys) {
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    return order;
}

// Rank-based selection: the individual of rank r (1 = best) is drawn with
// probability proportional to 1/(r + N). Returns `count` distinct positions
// into `fitness` (without replacement within the call).
inline std::vector<std::size_t> select_ranked(std::span<const double> fitness, std::size_t count, std::size_t N, Rng& rng) {
    if (fitness.empty()) throw std::invalid_argument("select: empty population");
    if (count > fitness.size()) throw std::invalid_argument("select: count exceeds population size");
    const auto order = rank_order(fitness);
    std::vector<double> weight(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) weight[r] = 1.0 / static_cast<double>(r + 1 + N);
    std::vector<std::size_t> picked;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t c = 0; c < count; ++c) {
        const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
        const double x = u(rng) * total;
        double acc = 0.0;
        std::size_t chosen = weight.size() - 1;
        while (chosen > 0 && weight[chosen] == 0.0) --chosen;
        for (std::size_t r = 0; r < weight.size(); ++r) {
            if (weight[r] == 0.0) continue;
            acc += weight[r];
            if (x < acc) {
                chosen = r;
                break;
            }
        }
        picked.push_back(order[chosen]);
        weight[chosen] = 0.0;
    }
    return picked;
}

// Selection over mechanism records; every record must carry a report.
inline std::vector<std::size_t> select(std::span<const MechanismRecord> population, std::size_t count, std::size_t N, Rng& rng) {
    std::vector<double> f;
    f.reserve(population.size());
    for (const auto& r : population) {
        if (!r.report) throw std::invalid_argument("select: record " + r.id + " has no fitness report");
        f.push_back(r.fitness());
    }
    return select_ranked(f, count, N, rng);
}

// Parents are kept as they are; offspring whose source duplicates a parent or
// an earlier offspring are dropped. The union is sorted by fitness (ties keep
// the older record) and truncated to N.
inline std::vector<MechanismRecord> manage_population(std::vector<MechanismRecord> parents, std::vector<MechanismRecord> offspring,
                                                      std::size_t N) {
    std::unordered_set<std::string> seen;
    for (const auto& p : parents) seen.insert(p.source);
    std::vector<MechanismRecord> all = std::move(parents);
    for (auto& o : offspring) {
        if (seen.insert(o.source).second) all.push_back(std::move(o));
    }
    std::stable_sort(all.begin(), all.end(), [](const MechanismRecord& a, const MechanismRecord& b) {
        if (a.fitness() != b.fitness()) return a.fitness() < b.fitness();
        return a.seq < b.seq;
    });
    if (all.size() > N) all.resize(N);
    return all;
}

// Elite snapshot: ascending fitness values of the best b records.
inline std::vector<double> elite_fitnesses(std::span<const MechanismRecord> population, std::size_t b) {
    std::vector<double> f;
    for (const auto& r : population) f.push_back(r.fitness());
    std::sort(f.begin(), f.end());
    if (f.size() > b) f.resize(b);
    return f;
}

struct StagnationTracker {
    std::vector<double> snapshot;
    std::size_t counter = 0;  // consecutive generations with an unchanged elite
};

// Compares the new elite with the snapshot (exact equality). Returns true when
// the counter reaches T_p, resetting it for the next trigger.
inline bool detect_stagnation(StagnationTracker& t, std::span<const MechanismRecord> population, std::size_t b, std::size_t T_p) {
    auto elite = elite_fitnesses(population, b);
    if (elite == t.snapshot) {
        ++t.counter;
    } else {
        t.snapshot = std::move(elite);
        t.counter = 0;
    }
    if (t.counter >= T_p) {
        t.counter = 0;
        return true;
    }
    return false;
}

// Keeps the N_p best prompts (prompts without fitness rank last, ties by
// age) while retaining at least one prompt of each variation kind.
inline std::vector<PromptStrategy> manage_prompts(std::vector<PromptStrategy> all, std::size_t N_p, std::size_t d) {
    std::stable_sort(all.begin(), all.end(), [d](const PromptStrategy& a, const PromptStrategy& b) {
        const auto fa = a.fitness(d), fb = b.fitness(d);
        if (fa.has_value() != fb.has_value()) return fa.has_value();
        if (fa && fb && *fa != *fb) return *fa < *fb;
        return a.seq < b.seq;
    });
    std::vector<PromptStrategy> kept;
    std::vector<bool> used(all.size(), false);
    for (PromptKind k : {PromptKind::exploration, PromptKind::modification}) {
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].kind == k) {
                used[i] = true;
                break;
            }
        }
    }
    std::size_t budget = N_p;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (used[i]) --budget;
    }
    for (std::size_t i = 0; i < all.size() && budget > 0; ++i) {
        if (!used[i]) {
            used[i] = true;
            --budget;
        }
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (used[i]) kept.push_back(std::move(all[i]));
    }
    return kept;
}

using EvaluatorFactory = std::function<std::unique_ptr<MechanismEvaluator>(const std::string& source)>;

// Receives the append-only event stream and per-generation snapshots.
class RunObserver {
public:
    virtual ~RunObserver() = default;
    virtual void on_event(const nlohmann::json& event) = 0;
    virtual void on_generation(std::size_t generation, std::span<const MechanismRecord> population,
                               std::span<const PromptStrategy> prompts, std::size_t d) = 0;
};

struct EvolutionResult {
    MechanismRecord best;
    std::vector<double> best_trace;  // best fitness after init and after each generation
    std::vector<std::size_t> prompt_evolution_generations;
    std::vector<MechanismRecord> population;
    std::vector<PromptStrategy> prompts;
};

// Population-based search over mechanisms proposed by a language model.
// Randomness, backend calls and population updates happen in a fixed order,
// so a scripted backend and a fixed seed reproduce a run exactly. Fitness
// evaluations of one generation run concurrently.
class EvolutionEngine {
public:
    EvolutionEngine(EvolutionConfig cfg, const Dataset& train, Backend& backend, EvaluatorFactory factory,
                    RunObserver* observer = nullptr)
        : cfg_(std::move(cfg)), data_(train), backend_(backend), factory_(std::move(factory)), observer_(observer),
          rng_(make_rng(cfg_.seed, "evolution")) {
        cfg_.validate();
        if (data_.misreports_per_agent() == 0) throw ConfigError("training dataset needs misreports (M >= 1)");
        add_prompt(PromptKind::exploration, std::string(kDefaultExplorationStrategy), 0);
        add_prompt(PromptKind::modification, std::string(kDefaultModificationStrategy), 0);
    }

    EvolutionResult run() {
        emit({{"event", "run_start"}, {"gen", 0}, {"config", to_json(cfg_)}, {"backend", backend_.describe()}, {"dataset_seed", data_.seed}});
        initialize();
        for (std::size_t g = 1; g <= cfg_.T_e; ++g) run_generation();
        const auto& best = population_.front();
        emit({{"event", "run_end"}, {"gen", generation_}, {"best_id", best.id}, {"best_fitness", fitness_json(best.fitness())}});
        return EvolutionResult{best, best_trace_, prompt_evolution_generations_, population_, prompts_};
    }

    void initialize() {
        std::vector<MechanismRecord> fresh;
        std::size_t answered = 0;
        std::string last_backend_error;
        for (std::size_t slot = 0; slot < cfg_.N; ++slot) {
            std::optional<ParsedMechanism> parsed;
            for (std::size_t attempt = 0; attempt <= cfg_.init_retries && !parsed; ++attempt) {
                try {
                    std::string text;
                    try {
                        text = backend_.complete({PromptKind::initialization, render(PromptKind::initialization, base_context()), cfg_.temperature});
                    } catch (const BackendError& e) {
                        last_backend_error = e.what();
                        throw;
                    }
                    ++answered;
                    parsed = parse_response(text);
                } catch (const std::exception& e) {
                    emit({{"event", "slot_failure"}, {"gen", 0}, {"slot", slot}, {"attempt", attempt}, {"message", e.what()}});
                }
            }
            MechanismRecord r;
            r.id = record_id(0, slot);
            r.generation_born = 0;
            r.prompt_id = "init";
            r.seq = next_seq_++;
            if (parsed) {
                r.description = parsed->description;
                r.source = parsed->code;
            } else {
                r.description = "fallback seed";
                r.source = fallback_source();
                r.prompt_id = "fallback";
                emit({{"event", "init_fallback"}, {"gen", 0}, {"slot", slot}, {"source", r.source}});
            }
            fresh.push_back(std::move(r));
        }
        // Nothing to evolve from if the model never answered.
        if (answered == 0) throw BackendError("backend answered no initialization request: " + last_backend_error);
        evaluate_all(fresh);
        for (std::size_t slot = 0; slot < fresh.size(); ++slot) emit_offspring(0, slot, fresh[slot]);
        population_ = manage_population({}, std::move(fresh), cfg_.N);
        // manage_population dedups offspring; initialization keeps duplicates
        // only if the model returned fewer than N distinct programs.
        if (population_.size() < cfg_.N) refill_duplicates();
        stagnation_.snapshot = elite_fitnesses(population_, cfg_.b);
        stagnation_.counter = 0;
        finish_generation();
    }

    void run_generation() {
        ++generation_;
        const std::size_t gen = generation_;
        struct Slot {
            std::size_t prompt;
            std::vector<std::size_t> parents;
            std::string prompt_text;
            std::optional<std::string> response;
            std::optional<ParsedMechanism> parsed;
        };
        std::vector<Slot> slots(cfg_.N);

        // Serial phase: all random choices.
        for (std::size_t s = 0; s < cfg_.N; ++s) {
            PromptKind kind = s % 2 == 0 ? PromptKind::exploration : PromptKind::modification;
            auto same = prompts_of(kind);
            if (same.empty()) {
                kind = kind == PromptKind::exploration ? PromptKind::modification : PromptKind::exploration;
                same = prompts_of(kind);
            }
            std::uniform_int_distribution<std::size_t> pick(0, same.size() - 1);
            slots[s].prompt = same[pick(rng_)];
            const std::size_t want = kind == PromptKind::exploration ? 2 : 1;
            slots[s].parents = select(population_, std::min(want, population_.size()), cfg_.N, rng_);
            slots[s].prompt_text = render_variation(prompts_[slots[s].prompt], slots[s].parents);
        }

        complete_all(slots, [](Slot& s) -> std::string& { return s.prompt_text; }, [](const Slot&) { return PromptKind::exploration; },
                     [&](Slot& s, std::string&& text) { s.response = std::move(text); }, gen);

        std::vector<MechanismRecord> offspring;
        std::vector<std::size_t> offspring_slot;
        for (std::size_t s = 0; s < cfg_.N; ++s) {
            if (!slots[s].response) continue;
            try {
                slots[s].parsed = parse_response(*slots[s].response);
            } catch (const ParseError& e) {
                emit({{"event", "slot_failure"}, {"gen", gen}, {"slot", s}, {"stage", "parse"}, {"message", e.what()}});
                continue;
            }
            MechanismRecord r;
            r.id = record_id(gen, s);
            r.description = slots[s].parsed->description;
            r.source = slots[s].parsed->code;
            for (std::size_t p : slots[s].parents) r.parent_ids.push_back(population_[p].id);
            r.prompt_id = prompts_[slots[s].prompt].id;
            r.generation_born = gen;
            r.seq = next_seq_++;
            offspring.push_back(std::move(r));
            offspring_slot.push_back(s);
        }
        evaluate_all(offspring);
        for (std::size_t o = 0; o < offspring.size(); ++o) {
            emit_offspring(gen, offspring_slot[o], offspring[o]);
            const double f = offspring[o].fitness();
            if (std::isfinite(f)) prompts_[slots[offspring_slot[o]].prompt].offspring_fitnesses.push_back(f);
        }
        population_ = manage_population(std::move(population_), std::move(offspring), cfg_.N);

        const bool stagnant = detect_stagnation(stagnation_, population_, cfg_.b, cfg_.T_p);
        emit({{"event", "stagnation_check"}, {"gen", gen}, {"counter", stagnant ? cfg_.T_p : stagnation_.counter}, {"triggered", stagnant}});
        if (stagnant && cfg_.prompt_evolution) {
            prompt_evolution_generations_.push_back(gen);
            evolve_prompts();
        }
        finish_generation();
    }

    // Asks the model for one new prompt per existing prompt (same kind as
    // the prompt at that position), admits those whose probe offspring does
    // not time out, and truncates the prompt population to N_p.
    void evolve_prompts() {
        const std::size_t gen = generation_;
        emit({{"event", "prompt_evolution_start"}, {"gen", gen}, {"prompts", prompt_ids()}});
        std::vector<PromptStrategy> fresh;
        const std::size_t existing = prompts_.size();
        for (std::size_t j = 0; j < existing; ++j) {
            const PromptKind kind = prompts_[j].kind;
            const auto same = prompts_of(kind);
            std::vector<double> keys;
            for (std::size_t idx : same) keys.push_back(prompts_[idx].fitness(cfg_.d).value_or(kFailedFitness));
            const std::size_t parent = same[select_ranked(keys, 1, cfg_.N_p, rng_).front()];

            PromptContext ctx = base_context();
            ctx.evolved_kind = kind;
            ctx.prompts.push_back({prompts_[parent].text, prompts_[parent].fitness(cfg_.d)});
            for (std::size_t r : rank_order(keys)) {
                if (same[r] != parent) ctx.prompts.push_back({prompts_[same[r]].text, prompts_[same[r]].fitness(cfg_.d)});
            }
            std::string text;
            try {
                text = parse_prompt_response(backend_.complete({PromptKind::prompt_evolution, render(PromptKind::prompt_evolution, ctx), cfg_.temperature}));
            } catch (const std::exception& e) {
                emit({{"event", "prompt_failure"}, {"gen", gen}, {"slot", j}, {"parent", prompts_[parent].id}, {"message", e.what()}});
                continue;
            }
            PromptStrategy cand;
            cand.id = "p" + std::to_string(next_prompt_++);
            cand.kind = kind;
            cand.text = text;
            cand.generation_born = gen;
            cand.seq = next_seq_++;

            // Quality control: one probe offspring must evaluate without timeout.
            const auto probe = probe_prompt(cand);
            const bool admitted = probe.has_value() && probe->kind != "timeout" && probe->kind != "no-offspring";
            emit({{"event", "prompt_candidate"},
                  {"gen", gen},
                  {"slot", j},
                  {"id", cand.id},
                  {"kind", to_string(kind)},
                  {"parent", prompts_[parent].id},
                  {"text", cand.text},
                  {"probe", probe ? probe->kind : std::string("no-offspring")},
                  {"admitted", admitted}});
            if (admitted) fresh.push_back(std::move(cand));
        }
        std::vector<PromptStrategy> all = std::move(prompts_);
        for (auto& p : fresh) all.push_back(std::move(p));
        prompts_ = manage_prompts(std::move(all), cfg_.N_p, cfg_.d);
        emit({{"event", "prompt_population"}, {"gen", gen}, {"prompts", prompt_ids()}});
    }

    const std::vector<MechanismRecord>& population() const { return population_; }
    const std::vector<PromptStrategy>& prompts() const { return prompts_; }
    std::size_t generation() const { return generation_; }
    const StagnationTracker& stagnation() const { return stagnation_; }
    const std::vector<double>& best_trace() const { return best_trace_; }

private:
    struct ProbeOutcome {
        std::string kind;  // "ok", "timeout", other failure kinds
    };

    static std::string record_id(std::size_t gen, std::size_t slot) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "g%03zu-s%02zu", gen, slot);
        return buf;
    }

    void add_prompt(PromptKind kind, std::string text, std::size_t gen) {
        PromptStrategy p;
        p.id = "p" + std::to_string(next_prompt_++);
        p.kind = kind;
        p.text = std::move(text);
        p.generation_born = gen;
        p.seq = next_seq_++;
        prompts_.push_back(std::move(p));
    }

    std::vector<std::size_t> prompts_of(PromptKind k) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < prompts_.size(); ++i) {
            if (prompts_[i].kind == k) out.push_back(i);
        }
        return out;
    }

    std::vector<std::string> prompt_ids() const {
        std::vector<std::string> ids;
        for (const auto& p : prompts_) ids.push_back(p.id);
        return ids;
    }

    PromptContext base_context() const {
        PromptContext ctx;
        ctx.K = data_.setting.K;
        if (!data_.setting.weights.is_unit()) {
            const auto w = data_.setting.weights.values();
            ctx.weights = std::vector<double>(w.begin(), w.end());
        }
        return ctx;
    }

    std::string render_variation(const PromptStrategy& p, const std::vector<std::size_t>& parents) const {
        PromptContext ctx = base_context();
        ctx.strategy = p.text;
        for (std::size_t idx : parents) {
            const auto& r = population_[idx];
            ctx.parents.push_back({r.description, r.source, r.fitness()});
        }
        PromptKind kind = p.kind;
        if (kind == PromptKind::exploration && ctx.parents.size() < 2) kind = PromptKind::modification;
        return render(kind, ctx);
    }

    // A K-facility generalization of the median: every facility at the
    // median order statistic.
    std::string fallback_source() const {
        if (data_.setting.K == 1) return builtin_source("median");
        const std::size_t mid = (data_.setting.n - 1) / 2;
        std::vector<std::size_t> idx(data_.setting.K, mid);
        return builtin_source(builtin_id(PercentileRule{idx}));
    }

    void refill_duplicates() {
        // Only reachable when the model produced duplicate initial programs:
        // pad with copies so the population has N members.
        const std::size_t unique = population_.size();
        for (std::size_t i = 0; population_.size() < cfg_.N; ++i) {
            MechanismRecord copy = population_[i % unique];
            copy.id += "-dup" + std::to_string(i);
            copy.seq = next_seq_++;
            population_.push_back(std::move(copy));
        }
    }

    template <typename SlotT, typename PromptOf, typename KindOf, typename Store>
    void complete_all(std::vector<SlotT>& slots, PromptOf prompt_of, KindOf, Store store, std::size_t gen) {
        std::vector<std::optional<std::string>> results(slots.size());
        std::vector<std::string> errors(slots.size());
        auto call = [&](std::size_t s) {
            try {
                const auto kind = prompts_[slots[s].prompt].kind;
                results[s] = backend_.complete({kind, prompt_of(slots[s]), cfg_.temperature});
            } catch (const std::exception& e) {
                errors[s] = e.what();
            }
        };
        const std::size_t inflight = std::max<std::size_t>(1, backend_.max_in_flight());
        if (inflight == 1) {
            for (std::size_t s = 0; s < slots.size(); ++s) call(s);
        } else {
            for (std::size_t lo = 0; lo < slots.size(); lo += inflight) {
                std::vector<std::jthread> pool;
                for (std::size_t s = lo; s < std::min(slots.size(), lo + inflight); ++s) pool.emplace_back(call, s);
            }
        }
        for (std::size_t s = 0; s < slots.size(); ++s) {
            if (results[s]) {
                store(slots[s], std::move(*results[s]));
            } else {
                emit({{"event", "slot_failure"}, {"gen", gen}, {"slot", s}, {"stage", "backend"}, {"message", errors[s]}});
            }
        }
    }

    FitnessReport evaluate_source(const std::string& source) {
        {
            std::lock_guard lock(cache_mu_);
            auto it = cache_.find(source);
            if (it != cache_.end()) return it->second;
        }
        FitnessReport rep;
        try {
            auto eval = factory_(source);
            rep = evaluate_fitness(data_, *eval);
        } catch (const std::exception& e) {
            rep = failed_report("runtime", e.what());
        }
        std::lock_guard lock(cache_mu_);
        return cache_.emplace(source, rep).first->second;
    }

    void evaluate_all(std::vector<MechanismRecord>& recs) {
        // Identical sources are evaluated once.
        std::vector<std::size_t> todo;
        std::unordered_set<std::string> queued;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            if (!cache_.contains(recs[i].source) && queued.insert(recs[i].source).second) todo.push_back(i);
        }
        unsigned workers = cfg_.eval_workers ? cfg_.eval_workers : std::max(1u, std::thread::hardware_concurrency());
        workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, todo.size())));
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t t = w; t < todo.size(); t += workers) evaluate_source(recs[todo[t]].source);
                });
            }
        }
        for (auto& r : recs) r.report = evaluate_source(r.source);
    }

    std::optional<ProbeOutcome> probe_prompt(const PromptStrategy& cand) {
        const std::size_t want = cand.kind == PromptKind::exploration ? 2 : 1;
        const auto parents = select(population_, std::min(want, population_.size()), cfg_.N, rng_);
        std::string text;
        try {
            text = backend_.complete({cand.kind, render_variation(cand, parents), cfg_.temperature});
        } catch (const std::exception&) {
            return std::nullopt;
        }
        ParsedMechanism parsed;
        try {
            parsed = parse_response(text);
        } catch (const ParseError&) {
            return std::nullopt;
        }
        const FitnessReport rep = evaluate_source(parsed.code);
        return ProbeOutcome{rep.failure ? rep.failure->kind : "ok"};
    }

    void emit_offspring(std::size_t gen, std::size_t slot, const MechanismRecord& r) {
        nlohmann::json e{{"event", "offspring"},
                         {"gen", gen},
                         {"slot", slot},
                         {"id", r.id},
                         {"prompt_id", r.prompt_id},
                         {"parents", r.parent_ids},
                         {"fitness", fitness_json(r.fitness())}};
        if (r.report) {
            e["social_cost"] = r.report->social_cost;
            e["max_regret"] = r.report->max_regret;
            if (r.report->failure) e["failure"] = r.report->failure->kind;
        }
        emit(std::move(e));
    }

    void finish_generation() {
        best_trace_.push_back(population_.front().fitness());
        std::vector<std::string> ids;
        for (const auto& r : population_) ids.push_back(r.id);
        emit({{"event", "generation_end"},
              {"gen", generation_},
              {"best_fitness", fitness_json(population_.front().fitness())},
              {"population", ids},
              {"prompts", prompt_ids()},
              {"stagnation_counter", stagnation_.counter}});
        if (observer_) observer_->on_generation(generation_, population_, prompts_, cfg_.d);
    }

    void emit(nlohmann::json e) {
        if (observer_) observer_->on_event(e);
    }

    EvolutionConfig cfg_;
    const Dataset& data_;
    Backend& backend_;
    EvaluatorFactory factory_;
    RunObserver* observer_;
    Rng rng_;

    std::vector<MechanismRecord> population_;
    std::vector<PromptStrategy> prompts_;
    StagnationTracker stagnation_;
    std::size_t generation_ = 0;
    std::uint64_t next_seq_ = 0;
    std::size_t next_prompt_ = 0;
    std::vector<double> best_trace_;
    std::vector<std::size_t> prompt_evolution_generations_;
    std::unordered_map<std::string, FitnessReport> cache_;
    std::mutex cache_mu_;
};

}  // namespace mechsynth
