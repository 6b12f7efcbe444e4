// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mechsynth {

// Bad flags, bad config files, missing env vars.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file on disk that does not match the expected schema.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by mechanism evaluators. `kind` is a short machine-readable tag
// ("timeout", "range", "length", "nan", "runtime", "crash", "protocol",
// "compile", ...). `index` is the invocation index within a batch when known.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(std::string kind, const std::string& message, long index = -1)
        : std::runtime_error(message), kind_(std::move(kind)), index_(index) {}

    const std::string& kind() const noexcept { return kind_; }
    long index() const noexcept { return index_; }

private:
    std::string kind_;
    long index_;
};

}  // namespace mechsynth
