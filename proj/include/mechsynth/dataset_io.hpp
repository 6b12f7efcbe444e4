// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mechsynth/domain.hpp"
#include "mechsynth/error.hpp"

namespace mechsynth {

inline constexpr int kDatasetSchemaVersion = 1;

inline nlohmann::json to_json(const DistributionSpec& d) {
    nlohmann::json j{{"kind", to_string(d.kind)}, {"label", d.label}};
    if (d.kind == DistributionKind::normal) {
        j["mu"] = d.p1;
        j["sigma"] = d.p2;
    } else if (d.kind == DistributionKind::beta) {
        j["alpha"] = d.p1;
        j["beta"] = d.p2;
    }
    return j;
}

inline DistributionSpec distribution_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    DistributionSpec d;
    if (kind == "uniform") {
        d = DistributionSpec::uniform();
    } else if (kind == "normal") {
        d = DistributionSpec::normal(j.at("mu").get<double>(), j.at("sigma").get<double>());
    } else if (kind == "beta") {
        d = DistributionSpec::beta(j.at("alpha").get<double>(), j.at("beta").get<double>());
    } else {
        throw SchemaError("unknown distribution kind: " + kind);
    }
    if (j.contains("label")) d.label = j.at("label").get<std::string>();
    return d;
}

inline nlohmann::json to_json(const ProblemSetting& s) {
    return nlohmann::json{
        {"n", s.n},
        {"K", s.K},
        {"weights", std::vector<double>(s.weights.values().begin(), s.weights.values().end())},
        {"distribution", to_json(s.distribution)},
        {"epsilon", s.epsilon},
        {"R", s.R},
        {"M", s.M},
    };
}

inline ProblemSetting setting_from_json(const nlohmann::json& j) {
    ProblemSetting s;
    s.n = j.at("n").get<std::size_t>();
    s.K = j.at("K").get<std::size_t>();
    try {
        s.weights = WeightVector(j.at("weights").get<std::vector<double>>());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
    s.distribution = distribution_from_json(j.at("distribution"));
    s.epsilon = j.at("epsilon").get<double>();
    s.R = j.at("R").get<std::size_t>();
    s.M = j.at("M").get<std::size_t>();
    return s;
}

inline nlohmann::json to_json(const Dataset& d) {
    const std::size_t R = d.setting.R, n = d.setting.n, M = d.setting.M;
    nlohmann::json peaks = nlohmann::json::array();
    nlohmann::json mis = nlohmann::json::array();
    for (std::size_t r = 0; r < R; ++r) {
        nlohmann::json prow = nlohmann::json::array();
        nlohmann::json mrow = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            prow.push_back(d.peak(r, i));
            nlohmann::json cell = nlohmann::json::array();
            for (std::size_t m = 0; m < M; ++m) cell.push_back(d.misreport(r, i, m));
            mrow.push_back(std::move(cell));
        }
        peaks.push_back(std::move(prow));
        mis.push_back(std::move(mrow));
    }
    return nlohmann::json{
        {"schema_version", kDatasetSchemaVersion},
        {"setting", to_json(d.setting)},
        {"seed", d.seed},
        {"peaks", std::move(peaks)},
        {"misreports", std::move(mis)},
    };
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset d;
    try {
        if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
            throw SchemaError("unsupported dataset schema_version");
        }
        d.setting = setting_from_json(j.at("setting"));
        d.seed = j.at("seed").get<std::uint64_t>();
        const auto& peaks = j.at("peaks");
        const auto& mis = j.at("misreports");
        const std::size_t R = d.setting.R, n = d.setting.n, M = d.setting.M;
        if (!peaks.is_array() || peaks.size() != R) throw SchemaError("peaks must have R rows");
        if (!mis.is_array() || mis.size() != R) throw SchemaError("misreports must have R rows");
        d.peaks.reserve(R * n);
        d.misreports.reserve(R * n * M);
        for (std::size_t r = 0; r < R; ++r) {
            if (!peaks[r].is_array() || peaks[r].size() != n) throw SchemaError("peaks row length != n");
            if (!mis[r].is_array() || mis[r].size() != n) throw SchemaError("misreports row length != n");
            for (std::size_t i = 0; i < n; ++i) {
                d.peaks.push_back(peaks[r][i].get<double>());
                const auto& cell = mis[r][i];
                if (!cell.is_array() || cell.size() != M) throw SchemaError("misreport cell length != M");
                for (std::size_t m = 0; m < M; ++m) d.misreports.push_back(cell[m].get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed dataset: ") + e.what());
    }
    d.validate();
    return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << to_json(d).dump() << '\n';
    if (!out) throw ConfigError("write failed: " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("dataset is not valid JSON: ") + e.what());
    }
    return dataset_from_json(j);
}

}  // namespace mechsynth
