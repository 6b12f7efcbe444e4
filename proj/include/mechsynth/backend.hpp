// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "mechsynth/error.hpp"
#include "mechsynth/prompts.hpp"

namespace mechsynth {

struct CompletionRequest {
    PromptKind kind = PromptKind::initialization;
    std::string prompt;
    double temperature = 1.0;
};

// Text-completion backend. Implementations throw BackendError on failure.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const CompletionRequest& req) = 0;
    // Number of complete() calls that may run concurrently.
    virtual std::size_t max_in_flight() const { return 1; }
    virtual std::string describe() const = 0;
};

// Replays canned responses. Either one ordered list for every call, or one
// list per prompt kind with an independent cursor each.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses) : ordered_(std::move(responses)) {}
    explicit ScriptedBackend(std::map<PromptKind, std::vector<std::string>> by_kind)
        : by_kind_(std::move(by_kind)), keyed_(true) {}
    ScriptedBackend(ScriptedBackend&& o) noexcept
        : ordered_(std::move(o.ordered_)), by_kind_(std::move(o.by_kind_)), kind_cursor_(std::move(o.kind_cursor_)), keyed_(o.keyed_),
          cursor_(o.cursor_), calls_(o.calls_) {}

    // {"responses": [...]} or {"by_kind": {"initialization": [...], ...}}
    static ScriptedBackend from_json(const nlohmann::json& j) {
        try {
            if (j.contains("responses")) return ScriptedBackend(j.at("responses").get<std::vector<std::string>>());
            if (j.contains("by_kind")) {
                std::map<PromptKind, std::vector<std::string>> m;
                for (const auto& [k, v] : j.at("by_kind").items()) m[prompt_kind_from_string(k)] = v.get<std::vector<std::string>>();
                return ScriptedBackend(std::move(m));
            }
        } catch (const std::exception& e) {
            throw ConfigError(std::string("bad script: ") + e.what());
        }
        throw ConfigError("script needs a \"responses\" list or a \"by_kind\" map");
    }

    static ScriptedBackend from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open script: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("script is not valid JSON: ") + e.what());
        }
        return from_json(j);
    }

    std::string complete(const CompletionRequest& req) override {
        std::lock_guard lock(mu_);
        ++calls_;
        if (!keyed_) {
            if (cursor_ >= ordered_.size()) throw BackendError("scripted backend exhausted after " + std::to_string(ordered_.size()) + " responses");
            return ordered_[cursor_++];
        }
        auto it = by_kind_.find(req.kind);
        auto& cur = kind_cursor_[req.kind];
        if (it == by_kind_.end() || cur >= it->second.size()) {
            throw BackendError("scripted backend has no more " + to_string(req.kind) + " responses");
        }
        return it->second[cur++];
    }

    std::string describe() const override { return keyed_ ? "scripted(by_kind)" : "scripted(ordered)"; }
    std::size_t calls() const { return calls_; }

private:
    std::vector<std::string> ordered_;
    std::map<PromptKind, std::vector<std::string>> by_kind_;
    std::map<PromptKind, std::size_t> kind_cursor_;
    bool keyed_ = false;
    std::size_t cursor_ = 0;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

struct RemoteBackendConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 1.0;
    double timeout_seconds = 120.0;
    int max_retries = 5;
    double backoff_initial_seconds = 1.0;
    std::size_t max_in_flight = 4;
    std::size_t prompt_cap = 65536;
};

inline nlohmann::json to_json(const RemoteBackendConfig& c) {
    return {{"base_url", c.base_url},         {"model", c.model},
            {"api_key_env", c.api_key_env},   {"temperature", c.temperature},
            {"timeout_seconds", c.timeout_seconds}, {"max_retries", c.max_retries},
            {"backoff_initial_seconds", c.backoff_initial_seconds}, {"max_in_flight", c.max_in_flight},
            {"prompt_cap", c.prompt_cap}};
}

inline RemoteBackendConfig remote_config_from_json(const nlohmann::json& j) {
    RemoteBackendConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_initial_seconds = j.value("backoff_initial_seconds", c.backoff_initial_seconds);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.prompt_cap = j.value("prompt_cap", c.prompt_cap);
    return c;
}

// Chat-completion client: one user message per call, retried with
// exponential backoff on transport errors, 429 and 5xx. The key is read from
// the environment once and never appears in messages or logs.
class RemoteBackend final : public Backend {
public:
    explicit RemoteBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
        }
        key_ = key;
        split_url();
    }

    std::string complete(const CompletionRequest& req) override {
        if (req.prompt.size() > cfg_.prompt_cap) {
            throw BackendError("prompt of " + std::to_string(req.prompt.size()) + " bytes exceeds cap of " + std::to_string(cfg_.prompt_cap));
        }
        const nlohmann::json body{
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
            {"temperature", req.temperature},
        };
        const std::string payload = body.dump();
        std::string last_error;
        double backoff = cfg_.backoff_initial_seconds;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
                backoff *= 2.0;
            }
            httplib::Client cli(origin_);
            const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
            const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
            cli.set_connection_timeout(secs, usecs);
            cli.set_read_timeout(secs, usecs);
            cli.set_write_timeout(secs, usecs);
            const httplib::Headers headers{{"Authorization", "Bearer " + key_}};
            auto res = cli.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) throw BackendError("HTTP " + std::to_string(res->status) + " from chat completion endpoint");
            try {
                const auto j = nlohmann::json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw BackendError(std::string("unexpected chat completion response: ") + e.what());
            }
        }
        throw BackendError("chat completion failed after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
    }

    std::size_t max_in_flight() const override { return cfg_.max_in_flight; }
    std::string describe() const override { return "remote(" + cfg_.model + " @ " + origin_ + path_prefix_ + ")"; }
    const RemoteBackendConfig& config() const { return cfg_; }

private:
    void split_url() {
        const auto scheme_end = cfg_.base_url.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + cfg_.base_url);
        const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
        origin_ = cfg_.base_url.substr(0, path_start);
        path_prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }

    RemoteBackendConfig cfg_;
    std::string key_;
    std::string origin_;
    std::string path_prefix_;
};

}  // namespace mechsynth
