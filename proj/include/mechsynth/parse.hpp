// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mechsynth {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParsedMechanism {
    std::string description;
    std::string code;
};

inline constexpr std::size_t kMaxResponseChars = 8192;
inline constexpr std::string_view kEntryPoint = "def get_locations";

namespace detail {

inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(a, b - a + 1));
}

// [begin, end) ranges of ``` fenced blocks including the fences.
inline std::vector<std::pair<std::size_t, std::size_t>> fenced_regions(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("```", pos);
        if (open == std::string_view::npos) break;
        const auto close = text.find("```", open + 3);
        if (close == std::string_view::npos) {
            out.emplace_back(open, text.size());
            break;
        }
        out.emplace_back(open, close + 3);
        pos = close + 3;
    }
    return out;
}

// Content of the outermost {...} span starting at the first '{' outside
// code fences.
inline std::optional<std::string> outer_braces(std::string_view text) {
    const auto fences = fenced_regions(text);
    auto in_fence = [&](std::size_t i) {
        for (const auto& [a, b] : fences) {
            if (i >= a && i < b) return true;
        }
        return false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' || in_fence(i)) continue;
        int depth = 0;
        for (std::size_t j = i; j < text.size(); ++j) {
            if (text[j] == '{') ++depth;
            if (text[j] == '}' && --depth == 0) return trim(text.substr(i + 1, j - i - 1));
        }
        return std::nullopt;  // unbalanced
    }
    return std::nullopt;
}

inline std::optional<std::string> first_fenced_code(std::string_view text) {
    const auto fences = fenced_regions(text);
    if (fences.empty()) return std::nullopt;
    auto [a, b] = fences.front();
    std::string_view inner = text.substr(a + 3, (b - a) - 3);
    if (inner.size() >= 3 && inner.substr(inner.size() - 3) == "```") inner.remove_suffix(3);
    // drop a language tag on the opening line
    const auto nl = inner.find('\n');
    if (nl != std::string_view::npos) {
        const std::string tag = trim(inner.substr(0, nl));
        if (!tag.empty() && tag.find_first_of(" \t(:") == std::string::npos) inner.remove_prefix(nl + 1);
    }
    return trim(inner);
}

}  // namespace detail

// Extracts the brace-delimited description and the code block (first fenced
// block, else the span from the entry-point definition to the end). Throws
// ParseError when no code can be found or the response exceeds the cap.
inline ParsedMechanism parse_response(std::string_view text) {
    if (text.size() > kMaxResponseChars) throw ParseError("response exceeds " + std::to_string(kMaxResponseChars) + " characters");
    ParsedMechanism out;
    auto desc = detail::outer_braces(text);
    auto code = detail::first_fenced_code(text);
    if (!code || code->empty()) {
        const auto at = text.find(kEntryPoint);
        if (at != std::string_view::npos) code = detail::trim(text.substr(at));
    }
    if (!desc && (!code || code->empty())) throw ParseError("response has neither a braced description nor code");
    if (!code || code->empty()) throw ParseError("response has no code");
    out.description = desc.value_or("");
    out.code = std::move(*code);
    return out;
}

// Prompt-evolution replies carry only the new prompt inside braces.
inline std::string parse_prompt_response(std::string_view text) {
    if (text.size() > kMaxResponseChars) throw ParseError("response exceeds cap");
    auto desc = detail::outer_braces(text);
    if (!desc || desc->empty()) throw ParseError("prompt response has no braced prompt");
    return *desc;
}

}  // namespace mechsynth
