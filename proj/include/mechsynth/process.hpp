// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mechsynth {

using Clock = std::chrono::steady_clock;

struct SpawnOptions {
    std::vector<std::string> argv;
    std::vector<std::string> env;           // complete environment, KEY=VALUE
    std::filesystem::path cwd;              // empty: inherit
    std::filesystem::path stderr_path;      // empty: /dev/null
};

namespace detail {

inline void set_nonblocking(int fd) {
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

inline void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

inline int poll_timeout_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return 0;
    return static_cast<int>(std::min<long long>(left, 1000));
}

}  // namespace detail

// A child process with piped stdin/stdout, its own process group, and
// non-blocking parent-side descriptors. The destructor kills and reaps.
class Subprocess {
public:
    Subprocess() = default;
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;
    Subprocess(Subprocess&& o) noexcept { *this = std::move(o); }
    Subprocess& operator=(Subprocess&& o) noexcept {
        if (this != &o) {
            terminate();
            pid_ = std::exchange(o.pid_, -1);
            in_ = std::exchange(o.in_, -1);
            out_ = std::exchange(o.out_, -1);
            buffer_ = std::move(o.buffer_);
            head_ = o.head_;
            scan_from_ = o.scan_from_;
            eof_ = o.eof_;
        }
        return *this;
    }
    ~Subprocess() { terminate(); }

    static Subprocess spawn(const SpawnOptions& opt) {
        if (opt.argv.empty()) throw std::invalid_argument("spawn: empty argv");
        ::signal(SIGPIPE, SIG_IGN);

        int in_pipe[2], out_pipe[2], err_pipe[2];
        if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
        if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
        if (::pipe2(err_pipe, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");

        // Everything the child needs is prepared before fork.
        std::vector<char*> argv, envp;
        for (const auto& a : opt.argv) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        for (const auto& e : opt.env) envp.push_back(const_cast<char*>(e.c_str()));
        envp.push_back(nullptr);
        const std::string cwd = opt.cwd.string();
        const std::string errp = opt.stderr_path.empty() ? "/dev/null" : opt.stderr_path.string();

        const pid_t pid = ::fork();
        if (pid < 0) throw std::runtime_error("fork failed");
        if (pid == 0) {
            ::setpgid(0, 0);
            ::dup2(in_pipe[0], STDIN_FILENO);
            ::dup2(out_pipe[1], STDOUT_FILENO);
            const int errfd = ::open(errp.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0600);
            if (errfd >= 0) ::dup2(errfd, STDERR_FILENO);
            int code = 0;
            if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
                code = errno;
            } else {
                ::execve(argv[0], argv.data(), envp.data());
                if (errno == ENOENT && std::strchr(argv[0], '/') == nullptr) {
                    // resolve bare names on PATH from the child environment
                    ::execvpe(argv[0], argv.data(), envp.data());
                }
                code = errno;
            }
            [[maybe_unused]] auto w = ::write(err_pipe[1], &code, sizeof(code));
            ::_exit(127);
        }
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[1]);
        int code = 0;
        const auto got = ::read(err_pipe[0], &code, sizeof(code));
        ::close(err_pipe[0]);
        if (got == static_cast<ssize_t>(sizeof(code))) {
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            int status = 0;
            ::waitpid(pid, &status, 0);
            throw std::runtime_error("cannot execute " + opt.argv[0] + ": " + std::strerror(code));
        }
        Subprocess p;
        p.pid_ = pid;
        p.in_ = in_pipe[1];
        p.out_ = out_pipe[0];
        detail::set_nonblocking(p.in_);
        detail::set_nonblocking(p.out_);
        return p;
    }

    bool running() const noexcept { return pid_ > 0; }
    int stdin_fd() const noexcept { return in_; }
    int stdout_fd() const noexcept { return out_; }
    void close_stdin() { detail::close_fd(in_); }

    enum class ReadStatus { line, timeout, eof };

    // Reads one LF-terminated line (without the LF) before `deadline`.
    ReadStatus read_line(std::string& line, Clock::time_point deadline) {
        for (;;) {
            if (take_line(line)) return ReadStatus::line;
            if (eof_) return ReadStatus::eof;
            if (Clock::now() >= deadline) return ReadStatus::timeout;
            pollfd pfd{out_, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, detail::poll_timeout_ms(deadline));
            if (rc < 0 && errno != EINTR) return ReadStatus::eof;
            if (rc > 0) fill();
        }
    }

    // Drains whatever stdout bytes are available without blocking.
    void fill() {
        char chunk[65536];
        for (;;) {
            const ssize_t got = ::read(out_, chunk, sizeof(chunk));
            if (got > 0) {
                buffer_.append(chunk, static_cast<std::size_t>(got));
                continue;
            }
            if (got == 0) eof_ = true;
            return;  // EAGAIN or error
        }
    }

    bool take_line(std::string& line) {
        const auto nl = buffer_.find('\n', std::max(head_, scan_from_));
        if (nl == std::string::npos) {
            scan_from_ = buffer_.size();
            return false;
        }
        line.assign(buffer_, head_, nl - head_);
        head_ = nl + 1;
        scan_from_ = head_;
        if (head_ > 65536 && head_ * 2 > buffer_.size()) {
            buffer_.erase(0, head_);
            scan_from_ -= head_;
            head_ = 0;
        }
        return true;
    }

    bool at_eof() const noexcept { return eof_ && buffer_.find('\n', head_) == std::string::npos; }

    // Writes as much of `data` as the pipe accepts; returns bytes written or
    // -1 when the child closed its stdin.
    long write_some(std::string_view data) {
        if (in_ < 0) return -1;
        const ssize_t n = ::write(in_, data.data(), data.size());
        if (n >= 0) return n;
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) return 0;
        return -1;
    }

    void kill() {
        if (pid_ > 0) {
            ::kill(-pid_, SIGKILL);
            ::kill(pid_, SIGKILL);
        }
    }

    // Kills (if needed) and reaps. Returns the wait status.
    int terminate() {
        detail::close_fd(in_);
        detail::close_fd(out_);
        int status = 0;
        if (pid_ > 0) {
            if (::waitpid(pid_, &status, WNOHANG) == 0) {
                kill();
                ::waitpid(pid_, &status, 0);
            }
            pid_ = -1;
        }
        return status;
    }

private:
    pid_t pid_ = -1;
    int in_ = -1;
    int out_ = -1;
    std::string buffer_;
    std::size_t head_ = 0;
    std::size_t scan_from_ = 0;
    bool eof_ = false;
};

}  // namespace mechsynth
