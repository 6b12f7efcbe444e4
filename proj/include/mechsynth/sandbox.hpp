// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdlib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mechsynth/error.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/process.hpp"
#include "mechsynth/protocol.hpp"
#include "mechsynth/registry.hpp"

namespace mechsynth {

struct SandboxConfig {
    // Executable that serves `runner --builtin <id>` (normally the mechsynth CLI).
    std::filesystem::path runner_executable;
    // argv prefix for external candidate code; `--source <file>` is appended.
    std::vector<std::string> external_runner;
    double handshake_timeout = 5.0;
    std::filesystem::path jail_root;   // empty: system temp directory
    std::filesystem::path stderr_log;  // empty: stderr kept inside the jail
};

enum class RunnerKind { external_code, builtin };

// Temporary working directory for one runner, removed on destruction.
class Jail {
public:
    explicit Jail(const std::filesystem::path& root) {
        const auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
        std::filesystem::create_directories(base);
        std::string tmpl = (base / "mechsynth-runner-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed under " + base.string());
        path_ = tmpl;
    }
    Jail(const Jail&) = delete;
    Jail& operator=(const Jail&) = delete;
    Jail(Jail&& o) noexcept : path_(std::exchange(o.path_, {})) {}
    Jail& operator=(Jail&& o) noexcept {
        if (this != &o) {
            cleanup();
            path_ = std::exchange(o.path_, {});
        }
        return *this;
    }
    ~Jail() { cleanup(); }

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    void cleanup() noexcept {
        if (!path_.empty()) {
            std::error_code ec;
            std::filesystem::remove_all(path_, ec);
        }
    }
    std::filesystem::path path_;
};

// One runner process serving one mechanism. A runner that was killed never
// answers again; all of its outstanding requests resolve to failures.
class RunnerHandle {
public:
    RunnerHandle(const RunnerHandle&) = delete;
    RunnerHandle& operator=(const RunnerHandle&) = delete;
    RunnerHandle(RunnerHandle&&) noexcept = default;
    RunnerHandle& operator=(RunnerHandle&&) noexcept = default;
    ~RunnerHandle() {
        proc_.terminate();
    }

    // Throws ConfigError for an unknown builtin id and EvaluationError for
    // spawn failures ("spawn"), handshake timeouts ("timeout"), malformed
    // handshakes ("protocol") and runner-reported load errors ("compile",
    // "entry", ...).
    static RunnerHandle spawn(RunnerKind kind, const std::string& source_or_id, const SandboxConfig& cfg) {
        RunnerHandle h(std::make_unique<Jail>(cfg.jail_root));
        SpawnOptions opt;
        if (kind == RunnerKind::builtin) {
            resolve_builtin(source_or_id);
            if (cfg.runner_executable.empty()) throw ConfigError("no runner executable configured for builtin runners");
            opt.argv = {cfg.runner_executable.string(), "runner", "--builtin", source_or_id};
        } else {
            if (cfg.external_runner.empty()) throw ConfigError("no external runner command configured");
            const auto src = h.jail_->path() / "candidate.py";
            std::ofstream(src) << source_or_id;
            opt.argv = cfg.external_runner;
            opt.argv.push_back("--source");
            opt.argv.push_back(src.string());
        }
        // No inherited environment: secrets such as API keys stay in the host.
        opt.env = {"PATH=/usr/local/bin:/usr/bin:/bin", "LANG=C.UTF-8", "HOME=" + h.jail_->path().string()};
        opt.cwd = h.jail_->path();
        opt.stderr_path = cfg.stderr_log.empty() ? h.jail_->path() / "stderr.log" : cfg.stderr_log;
        h.stderr_path_ = opt.stderr_path;
        try {
            h.proc_ = Subprocess::spawn(opt);
        } catch (const std::exception& e) {
            throw EvaluationError("spawn", e.what());
        }

        std::string line;
        const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.handshake_timeout));
        switch (h.proc_.read_line(line, deadline)) {
            case Subprocess::ReadStatus::timeout:
                h.kill("timeout");
                throw EvaluationError("timeout", "runner handshake timed out");
            case Subprocess::ReadStatus::eof:
                h.kill("crash");
                throw EvaluationError("crash", "runner exited before handshake");
            case Subprocess::ReadStatus::line:
                break;
        }
        Handshake hs;
        try {
            hs = decode_handshake(line);
        } catch (const EvaluationError&) {
            h.kill("protocol");
            throw;
        }
        if (!hs.ready) {
            const RunnerError err = hs.error.value_or(RunnerError{"runtime", "runner not ready"});
            h.kill(err.kind);
            throw EvaluationError(err.kind, err.message);
        }
        return h;
    }

    bool alive() const noexcept { return !dead_reason_.has_value(); }
    const std::optional<std::string>& dead_reason() const noexcept { return dead_reason_; }
    double consumed_seconds() const noexcept { return consumed_; }
    const std::filesystem::path& stderr_path() const noexcept { return stderr_path_; }

    // Sends `count` requests, where `encode(i, id)` renders request i with the
    // given id, and gathers one response per request in request order.
    // Responses may arrive in any order. On deadline, crash, or protocol
    // violation the runner is killed and every unanswered request resolves
    // to an error of that kind.
    std::vector<RunnerResponse> invoke_lines(std::size_t count, const std::function<std::string(std::size_t, std::uint64_t)>& encode,
                                             Clock::time_point deadline) {
        const auto started = Clock::now();
        std::vector<RunnerResponse> out(count);
        std::vector<bool> answered(count, false);
        std::size_t remaining = count;
        const std::uint64_t base = next_id_;
        next_id_ += count;

        auto fail_pending = [&](const std::string& kind, const std::string& msg) {
            for (std::size_t i = 0; i < count; ++i) {
                if (!answered[i]) {
                    out[i].id = base + i;
                    out[i].error = RunnerError{kind, msg};
                }
            }
            remaining = 0;
        };

        if (!alive()) {
            fail_pending(*dead_reason_, "runner is no longer running");
            return out;
        }

        std::string wbuf;
        std::size_t woff = 0, next = 0;
        bool stdin_broken = false;
        std::string line;
        while (remaining > 0) {
            if (Clock::now() >= deadline) {
                kill("timeout");
                fail_pending("timeout", "evaluation budget exhausted");
                break;
            }
            if (woff == wbuf.size()) {
                wbuf.clear();
                woff = 0;
            }
            while (wbuf.size() - woff < (1u << 16) && next < count) {
                wbuf += encode(next, base + next);
                wbuf += '\n';
                ++next;
            }
            const bool want_write = !stdin_broken && woff < wbuf.size();
            pollfd pfds[2] = {{proc_.stdout_fd(), POLLIN, 0}, {proc_.stdin_fd(), static_cast<short>(want_write ? POLLOUT : 0), 0}};
            const int rc = ::poll(pfds, want_write ? 2 : 1, detail::poll_timeout_ms(deadline));
            if (rc < 0 && errno != EINTR) {
                kill("crash");
                fail_pending("crash", "poll failed");
                break;
            }
            if (want_write && (pfds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
                const long n = proc_.write_some(std::string_view(wbuf).substr(woff));
                if (n < 0) {
                    stdin_broken = true;
                } else {
                    woff += static_cast<std::size_t>(n);
                }
            }
            if (pfds[0].revents & (POLLIN | POLLHUP | POLLERR)) proc_.fill();
            while (remaining > 0 && proc_.take_line(line)) {
                if (line.empty()) continue;
                RunnerResponse r;
                try {
                    r = decode_response(line);
                } catch (const EvaluationError& e) {
                    kill("protocol");
                    fail_pending("protocol", e.what());
                    break;
                }
                if (r.id < base || r.id >= base + count || answered[r.id - base]) {
                    kill("protocol");
                    fail_pending("protocol", "unexpected response id " + std::to_string(r.id));
                    break;
                }
                answered[r.id - base] = true;
                out[r.id - base] = std::move(r);
                --remaining;
            }
            if (remaining > 0 && proc_.at_eof()) {
                kill("crash");
                fail_pending("crash", "runner exited with " + std::to_string(count - remaining) + " of " +
                                          std::to_string(count) + " requests answered");
            }
        }
        consumed_ += std::chrono::duration<double>(Clock::now() - started).count();
        return out;
    }

    std::vector<RunnerResponse> invoke_batch(std::span<const RunnerRequest> requests, Clock::time_point deadline) {
        auto resp = invoke_lines(
            requests.size(),
            [&](std::size_t i, std::uint64_t id) {
                RunnerRequest r = requests[i];
                r.id = id;
                return encode_request(r);
            },
            deadline);
        // report ids as the caller assigned them
        for (std::size_t i = 0; i < resp.size(); ++i) resp[i].id = requests[i].id;
        return resp;
    }

    void kill(const std::string& reason) {
        if (!dead_reason_) dead_reason_ = reason;
        proc_.kill();
        proc_.terminate();
    }

private:
    explicit RunnerHandle(std::unique_ptr<Jail> jail) : jail_(std::move(jail)) {}

    std::unique_ptr<Jail> jail_;
    Subprocess proc_;
    std::filesystem::path stderr_path_;
    std::optional<std::string> dead_reason_;
    std::uint64_t next_id_ = 0;
    double consumed_ = 0.0;
};

inline RunnerHandle spawn_runner(RunnerKind kind, const std::string& source_or_id, const SandboxConfig& cfg) {
    return RunnerHandle::spawn(kind, source_or_id, cfg);
}

// Mechanism evaluator backed by a runner process. The wall-clock budget
// covers every batch evaluated through this object; once exceeded the runner
// is killed and evaluation fails with kind "timeout".
class RunnerEvaluator final : public MechanismEvaluator {
public:
    RunnerEvaluator(RunnerKind kind, std::string source_or_id, SandboxConfig cfg, double budget_seconds)
        : kind_(kind), source_(std::move(source_or_id)), cfg_(std::move(cfg)), budget_(budget_seconds) {}

    std::vector<Locations> evaluate_batch(const ProfileBatch& batch, std::span<const double> weights, std::size_t K) override {
        const auto start = Clock::now();
        if (!handle_) {
            try {
                handle_.emplace(RunnerHandle::spawn(kind_, source_, cfg_));
            } catch (const ConfigError& e) {
                throw EvaluationError("entry", e.what());
            }
        }
        const double left = budget_ - spent_;
        const auto deadline = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(std::max(0.0, left)));
        const std::vector<double> w(weights.begin(), weights.end());
        auto resp = handle_->invoke_lines(
            batch.size(),
            [&](std::size_t i, std::uint64_t id) {
                const auto p = batch[i];
                return nlohmann::json{{"id", id}, {"peaks", std::vector<double>(p.begin(), p.end())}, {"weights", w}, {"k", K}}.dump();
            },
            deadline);
        spent_ += std::chrono::duration<double>(Clock::now() - start).count();

        if (!handle_->alive() && *handle_->dead_reason() == "timeout") {
            throw EvaluationError("timeout", "runner killed after exceeding the " + format_double(budget_) + " s evaluation budget");
        }
        std::vector<Locations> out(resp.size());
        for (std::size_t i = 0; i < resp.size(); ++i) {
            if (!resp[i].ok()) {
                const auto& err = resp[i].error.value();
                throw EvaluationError(err.kind, err.message, static_cast<long>(i));
            }
            validate_locations(*resp[i].locations, K, static_cast<long>(i));
            out[i] = std::move(*resp[i].locations);
        }
        return out;
    }

    const std::optional<RunnerHandle>& handle() const noexcept { return handle_; }

private:
    RunnerKind kind_;
    std::string source_;
    SandboxConfig cfg_;
    double budget_;
    double spent_ = 0.0;
    std::optional<RunnerHandle> handle_;
};

class FailingEvaluator final : public MechanismEvaluator {
public:
    FailingEvaluator(std::string kind, std::string message) : kind_(std::move(kind)), message_(std::move(message)) {}
    std::vector<Locations> evaluate_batch(const ProfileBatch&, std::span<const double>, std::size_t) override {
        throw EvaluationError(kind_, message_);
    }

private:
    std::string kind_, message_;
};

struct EvaluatorOptions {
    SandboxConfig sandbox;
    double eval_timeout = 60.0;
    // Route builtin directives through the runner protocol instead of
    // evaluating them in-process.
    bool builtins_via_protocol = false;
};

// Builds the evaluator for a candidate's source: builtin directives resolve
// to builtins, everything else goes to the external runner.
inline std::unique_ptr<MechanismEvaluator> make_evaluator(const std::string& source, const EvaluatorOptions& opt) {
    if (auto id = builtin_directive(source)) {
        if (!is_builtin_id(*id)) return std::make_unique<FailingEvaluator>("entry", "unknown builtin: " + *id);
        if (opt.builtins_via_protocol) {
            return std::make_unique<RunnerEvaluator>(RunnerKind::builtin, *id, opt.sandbox, opt.eval_timeout);
        }
        return make_builtin_evaluator(*id);
    }
    if (opt.sandbox.external_runner.empty()) {
        return std::make_unique<FailingEvaluator>("no-runner", "candidate code needs an external runner (--runner)");
    }
    return std::make_unique<RunnerEvaluator>(RunnerKind::external_code, source, opt.sandbox, opt.eval_timeout);
}

}  // namespace mechsynth
