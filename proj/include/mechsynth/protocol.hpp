// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

// Newline-delimited JSON wire protocol between the host and a runner process.
//
//   runner -> host  {"protocol_version":1,"ready":true}
//                   {"protocol_version":1,"ready":false,"error":{"kind":..,"message":..}}
//   host -> runner  {"id":..,"peaks":[..],"weights":[..],"k":..}
//   runner -> host  {"id":..,"locations":[..]}  or  {"id":..,"error":{"kind":..,"message":..}}

#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mechsynth/error.hpp"
#include "mechsynth/fitness.hpp"
#include "mechsynth/registry.hpp"

namespace mechsynth {

inline constexpr int kProtocolVersion = 1;

struct RunnerRequest {
    std::uint64_t id = 0;
    std::vector<double> peaks;
    std::vector<double> weights;
    std::size_t k = 1;
};

struct RunnerError {
    std::string kind;
    std::string message;
};

struct RunnerResponse {
    std::uint64_t id = 0;
    std::optional<Locations> locations;
    std::optional<RunnerError> error;

    bool ok() const noexcept { return locations.has_value(); }
};

struct Handshake {
    bool ready = false;
    std::optional<RunnerError> error;
};

inline std::string encode_request(const RunnerRequest& r) {
    return nlohmann::json{{"id", r.id}, {"peaks", r.peaks}, {"weights", r.weights}, {"k", r.k}}.dump();
}

inline std::string encode_response(const RunnerResponse& r) {
    nlohmann::json j{{"id", r.id}};
    if (r.locations) {
        j["locations"] = *r.locations;
    } else if (r.error) {
        j["error"] = {{"kind", r.error->kind}, {"message", r.error->message}};
    }
    return j.dump();
}

inline std::string encode_handshake(const Handshake& h) {
    nlohmann::json j{{"protocol_version", kProtocolVersion}, {"ready", h.ready}};
    if (h.error) j["error"] = {{"kind", h.error->kind}, {"message", h.error->message}};
    return j.dump();
}

// All decoders throw EvaluationError("protocol", ...) on malformed input.
inline RunnerRequest decode_request(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RunnerRequest r;
        r.id = j.at("id").get<std::uint64_t>();
        r.peaks = j.at("peaks").get<std::vector<double>>();
        r.weights = j.at("weights").get<std::vector<double>>();
        r.k = j.at("k").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("protocol", std::string("malformed request: ") + e.what());
    }
}

inline RunnerResponse decode_response(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RunnerResponse r;
        r.id = j.at("id").get<std::uint64_t>();
        if (j.contains("locations")) {
            // null entries (NaN on the runner side) are kept as NaN for host validation
            Locations locs;
            for (const auto& v : j.at("locations")) {
                locs.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
            }
            r.locations = std::move(locs);
        } else if (j.contains("error")) {
            r.error = RunnerError{j["error"].value("kind", "runtime"), j["error"].value("message", "")};
        } else {
            throw EvaluationError("protocol", "response has neither locations nor error");
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("protocol", std::string("malformed response: ") + e.what());
    }
}

inline Handshake decode_handshake(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        if (j.at("protocol_version").get<int>() != kProtocolVersion) {
            throw EvaluationError("protocol", "unsupported protocol_version");
        }
        Handshake h;
        h.ready = j.at("ready").get<bool>();
        if (j.contains("error")) h.error = RunnerError{j["error"].value("kind", "runtime"), j["error"].value("message", "")};
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("protocol", std::string("malformed handshake: ") + e.what());
    }
}

// Serves the protocol with a builtin mechanism until `in` closes. A bad
// request line produces an error response and the loop continues. Returns
// the process exit code.
inline int builtin_runner_main(const std::string& builtin_id, std::istream& in, std::ostream& out) {
    std::optional<Builtin> builtin;
    try {
        builtin = resolve_builtin(builtin_id);
    } catch (const std::exception& e) {
        out << encode_handshake({false, RunnerError{"entry", e.what()}}) << '\n' << std::flush;
        return 2;
    }
    out << encode_handshake({true, std::nullopt}) << '\n' << std::flush;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        RunnerResponse resp;
        try {
            const RunnerRequest req = decode_request(line);
            resp.id = req.id;
            try {
                resp.locations = builtin->fn(req.peaks, req.weights, req.k);
            } catch (const std::exception& e) {
                resp.error = RunnerError{"runtime", e.what()};
            }
        } catch (const EvaluationError& e) {
            // Best effort at recovering the id so the host can match the error.
            try {
                resp.id = nlohmann::json::parse(line).at("id").get<std::uint64_t>();
            } catch (...) {
                resp.id = 0;
            }
            resp.error = RunnerError{"protocol", e.what()};
        }
        if (builtin_id == "test:garbage") {
            out << "this is not json\n";
        } else {
            out << encode_response(resp) << '\n';
        }
        if (in.rdbuf()->in_avail() <= 0) out.flush();
    }
    out.flush();
    return 0;
}

}  // namespace mechsynth
