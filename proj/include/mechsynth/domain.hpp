// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mechsynth/error.hpp"
#include "mechsynth/rng.hpp"

namespace mechsynth {

// Agent weights gamma_i. Every entry is strictly positive.
class WeightVector {
public:
    WeightVector() = default;
    explicit WeightVector(std::vector<double> gamma) : gamma_(std::move(gamma)) {
        for (double g : gamma_) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                throw std::invalid_argument("weights must be positive and finite");
            }
        }
    }

    static WeightVector uniform(std::size_t n) { return WeightVector(std::vector<double>(n, 1.0)); }

    std::size_t size() const noexcept { return gamma_.size(); }
    double operator[](std::size_t i) const { return gamma_[i]; }
    std::span<const double> values() const noexcept { return gamma_; }
    double total() const { return std::accumulate(gamma_.begin(), gamma_.end(), 0.0); }

    bool is_unit() const {
        for (double g : gamma_) {
            if (g != 1.0) return false;
        }
        return true;
    }

    friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
    std::vector<double> gamma_;
};

enum class DistributionKind { uniform, normal, beta };

struct DistributionSpec {
    DistributionKind kind = DistributionKind::uniform;
    // normal: (mu, sigma); beta: (alpha, beta); unused for uniform.
    double p1 = 0.0;
    double p2 = 0.0;
    // Display label ("uniform", "normal", "beta1", ...). Defaults to kind name.
    std::string label = "uniform";

    static DistributionSpec uniform() { return {DistributionKind::uniform, 0.0, 0.0, "uniform"}; }
    static DistributionSpec normal(double mu, double sigma, std::string label = "normal") {
        return {DistributionKind::normal, mu, sigma, std::move(label)};
    }
    static DistributionSpec beta(double alpha, double beta, std::string label = "beta") {
        return {DistributionKind::beta, alpha, beta, std::move(label)};
    }

    void validate() const {
        switch (kind) {
            case DistributionKind::uniform:
                break;
            case DistributionKind::normal:
                if (!(p2 > 0.0) || !std::isfinite(p1)) throw std::invalid_argument("normal: sigma must be > 0");
                break;
            case DistributionKind::beta:
                if (!(p1 > 0.0) || !(p2 > 0.0)) throw std::invalid_argument("beta: alpha and beta must be > 0");
                break;
        }
    }

    friend bool operator==(const DistributionSpec&, const DistributionSpec&) = default;
};

inline std::string to_string(DistributionKind k) {
    switch (k) {
        case DistributionKind::uniform: return "uniform";
        case DistributionKind::normal: return "normal";
        case DistributionKind::beta: return "beta";
    }
    return "?";
}

// Accepts the names used in the experiments ("uniform", "normal", "beta1",
// "beta2") and explicit forms "normal:MU,SIGMA" / "beta:A,B".
inline DistributionSpec parse_distribution(const std::string& text) {
    if (text == "uniform") return DistributionSpec::uniform();
    if (text == "normal") return DistributionSpec::normal(0.5, 1.0, "normal");
    if (text == "beta1") return DistributionSpec::beta(1.0, 9.0, "beta1");
    if (text == "beta2") return DistributionSpec::beta(9.0, 1.0, "beta2");
    auto colon = text.find(':');
    if (colon != std::string::npos) {
        std::string head = text.substr(0, colon);
        std::string args = text.substr(colon + 1);
        auto comma = args.find(',');
        if (comma == std::string::npos) throw ConfigError("distribution needs two parameters: " + text);
        double a = 0.0, b = 0.0;
        try {
            a = std::stod(args.substr(0, comma));
            b = std::stod(args.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad distribution parameters: " + text);
        }
        DistributionSpec spec;
        if (head == "normal") {
            spec = DistributionSpec::normal(a, b, text);
        } else if (head == "beta") {
            spec = DistributionSpec::beta(a, b, text);
        } else {
            throw ConfigError("unknown distribution: " + text);
        }
        try {
            spec.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        return spec;
    }
    throw ConfigError("unknown distribution: " + text);
}

struct ProblemSetting {
    std::size_t n = 1;
    std::size_t K = 1;
    WeightVector weights;
    DistributionSpec distribution;
    double epsilon = 0.0;
    std::size_t R = 1;
    std::size_t M = 0;

    void validate() const {
        if (n < 1) throw std::invalid_argument("n must be >= 1");
        if (K < 1) throw std::invalid_argument("K must be >= 1");
        if (R < 1) throw std::invalid_argument("R must be >= 1");
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in [0,1)");
        if (weights.size() != n) throw std::invalid_argument("weights length must equal n");
        distribution.validate();
    }

    friend bool operator==(const ProblemSetting&, const ProblemSetting&) = default;
};

// R x n true peaks and R x n x M misreports, stored row-major.
struct Dataset {
    ProblemSetting setting;
    std::uint64_t seed = 0;
    std::vector<double> peaks;
    std::vector<double> misreports;

    std::size_t samples() const noexcept { return setting.R; }
    std::size_t agents() const noexcept { return setting.n; }
    std::size_t misreports_per_agent() const noexcept { return setting.M; }

    std::span<const double> profile(std::size_t j) const {
        return std::span<const double>(peaks).subspan(j * setting.n, setting.n);
    }
    double peak(std::size_t j, std::size_t i) const { return peaks[j * setting.n + i]; }
    double misreport(std::size_t j, std::size_t i, std::size_t m) const {
        return misreports[(j * setting.n + i) * setting.M + m];
    }

    // Throws SchemaError if shapes or ranges are inconsistent.
    void validate() const {
        try {
            setting.validate();
        } catch (const std::invalid_argument& e) {
            throw SchemaError(std::string("invalid setting: ") + e.what());
        }
        if (peaks.size() != setting.R * setting.n) throw SchemaError("peaks shape does not match R x n");
        if (misreports.size() != setting.R * setting.n * setting.M) {
            throw SchemaError("misreports shape does not match R x n x M");
        }
        for (double v : peaks) {
            if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("peak outside [0,1]: " + std::to_string(v));
        }
        for (double v : misreports) {
            if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("misreport outside [0,1]: " + std::to_string(v));
        }
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline double draw_unit(const DistributionSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case DistributionKind::uniform: {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            return u(rng);
        }
        case DistributionKind::normal: {
            std::normal_distribution<double> d(spec.p1, spec.p2);
            // Rejection keeps the density shape on [0,1] without atoms at the ends.
            for (;;) {
                double x = d(rng);
                if (x >= 0.0 && x <= 1.0) return x;
            }
        }
        case DistributionKind::beta: {
            std::gamma_distribution<double> ga(spec.p1, 1.0);
            std::gamma_distribution<double> gb(spec.p2, 1.0);
            for (;;) {
                double x = ga(rng);
                double y = gb(rng);
                if (x + y > 0.0) return x / (x + y);
            }
        }
    }
    return 0.0;
}

}  // namespace detail

// R x n i.i.d. draws, row-major. Pure function of (spec, n, R, seed).
inline std::vector<double> sample_peaks(const DistributionSpec& spec, std::size_t n, std::size_t R, std::uint64_t seed) {
    spec.validate();
    if (n < 1 || R < 1) throw std::invalid_argument("sample_peaks: n and R must be >= 1");
    Rng rng(seed);
    std::vector<double> out(R * n);
    for (double& v : out) v = detail::draw_unit(spec, rng);
    return out;
}

// R x n x M i.i.d. uniform misreports, independent of the true peaks.
inline std::vector<double> sample_misreports(std::size_t n, std::size_t R, std::size_t M, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out(R * n * M);
    for (double& v : out) v = u(rng);
    return out;
}

inline Dataset generate_dataset(const ProblemSetting& setting, std::uint64_t seed) {
    setting.validate();
    Dataset d;
    d.setting = setting;
    d.seed = seed;
    d.peaks = sample_peaks(setting.distribution, setting.n, setting.R, derive_seed(seed, "peaks"));
    d.misreports = sample_misreports(setting.n, setting.R, setting.M, derive_seed(seed, "misreports"));
    return d;
}

}  // namespace mechsynth
