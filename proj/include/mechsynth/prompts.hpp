// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mechsynth/error.hpp"

namespace mechsynth {

enum class PromptKind { initialization, exploration, modification, prompt_evolution };

inline std::string to_string(PromptKind k) {
    switch (k) {
        case PromptKind::initialization: return "initialization";
        case PromptKind::exploration: return "exploration";
        case PromptKind::modification: return "modification";
        case PromptKind::prompt_evolution: return "prompt_evolution";
    }
    return "?";
}

inline PromptKind prompt_kind_from_string(const std::string& s) {
    if (s == "initialization") return PromptKind::initialization;
    if (s == "exploration") return PromptKind::exploration;
    if (s == "modification") return PromptKind::modification;
    if (s == "prompt_evolution") return PromptKind::prompt_evolution;
    throw std::invalid_argument("unknown prompt kind: " + s);
}

// Default variation prompt strategies; these are the texts that prompt
// evolution later rewrites.
inline constexpr std::string_view kDefaultExplorationStrategy =
    "Please help me create a new strategy that has a totally different form from the given ones.";

inline constexpr std::string_view kDefaultModificationStrategy =
    "If total cost is less than 1, please identify the main strategy parameters and assist me in creating a new "
    "strategy that has a different parameter settings of the score function provided. Otherwise, if total cost is 1 "
    "or higher, the strategy is not `strategyproof'. Please help me revise the strategy to make it `strategyproof', "
    "which means that if any sample in the list misreports its location, the resulting locations will not be closer "
    "to the sample's true location.";

namespace templates {

inline constexpr std::string_view kIntro =
    "I need help design a strategy to determine {K} facility locations in [0,1] given a list of location samples. "
    "The objective is to minimize the sum of cost values to closest facility.\n\n";

inline constexpr std::string_view kTail =
    "First, describe your new strategy and main steps in one sentence. The description must be inside a brace. "
    "Next, implement it in Python using the following template:\n\n"
    "{code_template}\n\n"
    "Do not give additional explanations and do not use additional other packages.";

inline constexpr std::string_view kExplorationBody =
    "I have 2 existing strategies with their codes as follows:\n"
    "{parent_blocks}\n\n"
    "{strategy}\n";

inline constexpr std::string_view kModificationBody =
    "I have one strategy with its code as follows:\n"
    "{parent_blocks}\n"
    "Total cost: {fitness}\n\n"
    "{strategy}\n";

inline constexpr std::string_view kPromptEvolutionBody =
    "I want to leverage the capabilities of LLMs to generate heuristic algorithms that can efficiently tackle this "
    "problem. I have already developed a set of initial prompts and observed the corresponding outputs. However, to "
    "improve the effectiveness of these algorithms, we need your assistance in carefully analyzing the existing "
    "prompts and their results. Based on this analysis, we ask you to generate new prompts that will help us achieve "
    "better results in solving the problem.\n\n"
    "I have {prompt_count} existing prompts with average score (the lower the better) as follows:\n"
    "{prompt_list}\n\n"
    "Note that we categorize prompts into two groups: Exploration and Modification. Those I just showed are "
    "{prompt_kind} prompts, which ask LLMs to generate new strategies that are as different as possible from the "
    "input strategies.\n\n"
    "Please help me create a new {prompt_kind} prompt that has a totally different form from the given ones but can "
    "be motivated from them.\n"
    "Describe your new prompt and main steps in one sentence. The description must be inside a brace. Do not give "
    "additional explanations.";

inline constexpr std::string_view kCodeTemplateHead =
    "def get_locations(samples):\n"
    "    '''\n"
    "    Determines the optimal locations from a given list of location samples.\n"
    "\n"
    "    Args:\n"
    "    samples (list): A one-dimensional list containing the location samples.\n";

inline constexpr std::string_view kCodeTemplateTail =
    "\n"
    "    Returns:\n"
    "    list: A one-dimensional list of the optimal locations, containing n_locations elements in [0,1].\n"
    "    '''\n"
    "\n"
    "    # Placeholder (replace with your actual implementation)\n"
    "    locations = ...\n"
    "\n"
    "    return locations";

}  // namespace templates

// Integers print without a decimal point, matching "[5,1,1,1,1]".
inline std::string format_weight_list(std::span<const double> weights) {
    std::string out = "[";
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (i) out += ',';
        const double w = weights[i];
        char buf[64];
        if (w == std::floor(w) && std::abs(w) < 1e15) {
            std::snprintf(buf, sizeof(buf), "%.0f", w);
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g", w);
        }
        out += buf;
    }
    return out + "]";
}

// Unweighted template, or the weighted one with the weight vector embedded.
inline std::string code_template(std::optional<std::span<const double>> weights) {
    std::string t(templates::kCodeTemplateHead);
    if (weights) t += "    weights (list): A list of fixed weights assigned to the samples: " + format_weight_list(*weights) + " \n";
    t += templates::kCodeTemplateTail;
    return t;
}

inline std::string format_fitness(double v) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.5f", v);
    return buf;
}

struct ParentView {
    std::string description;
    std::string code;
    double fitness = 0.0;
};

struct PromptEntry {
    std::string text;
    std::optional<double> fitness;
};

struct PromptContext {
    std::size_t K = 1;
    // Present for weighted problems; selects the weighted code template.
    std::optional<std::vector<double>> weights;
    std::vector<ParentView> parents;
    std::string strategy;               // variation prompt strategy text
    std::vector<PromptEntry> prompts;   // prompt evolution: same-kind prompts
    std::optional<PromptKind> evolved_kind;
};

// Replaces every {name} with values[name]. Unknown placeholders are errors.
inline std::string substitute(std::string_view body, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(body.size() + 1024);
    std::size_t i = 0;
    while (i < body.size()) {
        const auto open = body.find('{', i);
        if (open == std::string_view::npos) {
            out.append(body.substr(i));
            break;
        }
        const auto close = body.find('}', open);
        if (close == std::string_view::npos) throw std::logic_error("unterminated placeholder in template");
        out.append(body.substr(i, open - i));
        const std::string name(body.substr(open + 1, close - open - 1));
        const auto it = values.find(name);
        if (it == values.end()) throw std::invalid_argument("missing placeholder context: " + name);
        out += it->second;
        i = close + 1;
    }
    return out;
}

// Renders one of the four prompts. Throws std::invalid_argument when the
// context lacks what the kind needs.
inline std::string render(PromptKind kind, const PromptContext& ctx) {
    std::map<std::string, std::string> v;
    v["K"] = std::to_string(ctx.K);
    if (ctx.weights) {
        v["code_template"] = code_template(std::span<const double>(*ctx.weights));
    } else {
        v["code_template"] = code_template(std::nullopt);
    }
    std::string body(templates::kIntro);
    switch (kind) {
        case PromptKind::initialization:
            body += templates::kTail;
            break;
        case PromptKind::exploration: {
            if (ctx.parents.size() != 2) throw std::invalid_argument("exploration prompt needs exactly 2 parents");
            if (ctx.strategy.empty()) throw std::invalid_argument("missing placeholder context: strategy");
            std::string blocks;
            for (std::size_t p = 0; p < 2; ++p) {
                if (p) blocks += "\n\n";
                blocks += "No. " + std::to_string(p + 1) + " strategy and the corresponding code are:\n";
                blocks += ctx.parents[p].description + "\n" + ctx.parents[p].code;
            }
            v["parent_blocks"] = blocks;
            v["strategy"] = ctx.strategy;
            body += templates::kExplorationBody;
            body += templates::kTail;
            break;
        }
        case PromptKind::modification: {
            if (ctx.parents.size() != 1) throw std::invalid_argument("modification prompt needs exactly 1 parent");
            if (ctx.strategy.empty()) throw std::invalid_argument("missing placeholder context: strategy");
            v["parent_blocks"] = "Strategy description: " + ctx.parents[0].description + "\nCode: " + ctx.parents[0].code;
            v["fitness"] = format_fitness(ctx.parents[0].fitness);
            v["strategy"] = ctx.strategy;
            body += templates::kModificationBody;
            body += templates::kTail;
            break;
        }
        case PromptKind::prompt_evolution: {
            if (ctx.prompts.empty()) throw std::invalid_argument("prompt evolution needs at least one existing prompt");
            if (!ctx.evolved_kind || *ctx.evolved_kind == PromptKind::initialization ||
                *ctx.evolved_kind == PromptKind::prompt_evolution) {
                throw std::invalid_argument("missing placeholder context: prompt_kind");
            }
            std::string list;
            for (std::size_t p = 0; p < ctx.prompts.size(); ++p) {
                if (p) list += "\n";
                list += "No. " + std::to_string(p + 1) + " prompt:\n";
                list += "Content: " + ctx.prompts[p].text + "\n";
                list += "Score: " + (ctx.prompts[p].fitness ? format_fitness(*ctx.prompts[p].fitness) : std::string("N/A"));
            }
            v["prompt_list"] = list;
            v["prompt_count"] = std::to_string(ctx.prompts.size());
            v["prompt_kind"] = *ctx.evolved_kind == PromptKind::exploration ? "Exploration" : "Modification";
            body += templates::kPromptEvolutionBody;
            break;
        }
    }
    return substitute(body, v);
}

}  // namespace mechsynth
