// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "mechsynth/dataset_io.hpp"
#include "mechsynth/domain.hpp"
#include "test_support.hpp"

using namespace mechsynth;
using testing_support::TempDir;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

bool all_unit(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

}  // namespace

TEST(SamplePeaks, UniformSingleRowInRange) {
    const auto p = sample_peaks(DistributionSpec::uniform(), 2, 1, 42);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_TRUE(all_unit(p));
}

TEST(SamplePeaks, BetaMeanMatchesClosedForm) {
    // alpha / (alpha + beta)
    const auto hi = sample_peaks(parse_distribution("beta2"), 1, 10000, 7);
    EXPECT_NEAR(mean(hi), 9.0 / 10.0, 0.01);
    const auto lo = sample_peaks(parse_distribution("beta1"), 1, 10000, 8);
    EXPECT_NEAR(mean(lo), 1.0 / 10.0, 0.01);
    EXPECT_TRUE(all_unit(hi));
    EXPECT_TRUE(all_unit(lo));
}

TEST(SamplePeaks, TruncatedNormalSymmetricAboutHalf) {
    const auto p = sample_peaks(parse_distribution("normal"), 1, 10000, 9);
    EXPECT_TRUE(all_unit(p));
    EXPECT_NEAR(mean(p), 0.5, 0.02);
}

TEST(SamplePeaks, UniformMeanWithinThreeStandardErrors) {
    const auto p = sample_peaks(DistributionSpec::uniform(), 1, 10000, 10);
    const double se = std::sqrt(1.0 / 12.0 / 10000.0);
    EXPECT_NEAR(mean(p), 0.5, 3 * se);
}

TEST(SamplePeaks, RejectsBadParameters) {
    EXPECT_THROW(sample_peaks(DistributionSpec::normal(0.5, 0.0), 1, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample_peaks(DistributionSpec::normal(0.5, -1.0), 1, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample_peaks(DistributionSpec::beta(0.0, 1.0), 1, 1, 0), std::invalid_argument);
    EXPECT_THROW(sample_peaks(DistributionSpec::beta(1.0, -2.0), 1, 1, 0), std::invalid_argument);
    EXPECT_THROW(parse_distribution("beta:0,1"), ConfigError);
    EXPECT_THROW(parse_distribution("cauchy"), ConfigError);
}

TEST(SamplePeaks, DeterministicPerSeed) {
    const auto spec = parse_distribution("normal:0.3,0.2");
    EXPECT_EQ(sample_peaks(spec, 5, 100, 1), sample_peaks(spec, 5, 100, 1));
    EXPECT_NE(sample_peaks(spec, 5, 100, 1), sample_peaks(spec, 5, 100, 2));
}

TEST(SampleMisreports, Shapes) {
    EXPECT_TRUE(sample_misreports(5, 3, 0, 1).empty());
    EXPECT_EQ(sample_misreports(5, 1000, 10, 1).size(), 1000u * 5u * 10u);
    EXPECT_EQ(sample_misreports(5, 10, 10, 4), sample_misreports(5, 10, 10, 4));
    EXPECT_TRUE(all_unit(sample_misreports(3, 100, 4, 5)));
}

TEST(GenerateDataset, StreamsIndependentOfEachOther) {
    // Changing M alters only the misreport stream.
    const auto a = generate_dataset(testing_support::setting(4, 2, {}, 50, 3), 11);
    const auto b = generate_dataset(testing_support::setting(4, 2, {}, 50, 7), 11);
    EXPECT_EQ(a.peaks, b.peaks);
    EXPECT_NE(a.misreports.size(), b.misreports.size());
    EXPECT_NO_THROW(a.validate());
}

TEST(ProblemSetting, Invariants) {
    auto s = testing_support::setting(3, 1);
    EXPECT_NO_THROW(s.validate());
    s.epsilon = 1.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = testing_support::setting(3, 1);
    s.R = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = testing_support::setting(3, 1);
    s.weights = WeightVector::uniform(2);
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(WeightVector({1.0, 0.0}), std::invalid_argument);
}

TEST(DatasetIo, RoundTripIsBitExact) {
    TempDir tmp;
    auto d = generate_dataset(testing_support::setting(5, 2, {5, 1, 1, 1, 1}, 40, 3, 0.0005, "beta1"), 99);
    d.peaks[0] = 1.0 / 3.0;
    d.peaks[1] = 5e-324;  // smallest subnormal
    d.peaks[2] = std::nextafter(1.0, 0.0);
    save_dataset(d, tmp / "d.json");
    const auto back = load_dataset(tmp / "d.json");
    EXPECT_EQ(back, d);
    for (std::size_t i = 0; i < d.peaks.size(); ++i) {
        EXPECT_EQ(std::memcmp(&back.peaks[i], &d.peaks[i], sizeof(double)), 0);
    }
}

TEST(DatasetIo, RejectsOutOfRangePeak) {
    TempDir tmp;
    const auto d = generate_dataset(testing_support::setting(2, 1, {}, 2, 1), 1);
    auto j = to_json(d);
    j["peaks"][0][1] = 1.5;
    std::ofstream(tmp / "bad.json") << j.dump();
    EXPECT_THROW(load_dataset(tmp / "bad.json"), SchemaError);
}

TEST(DatasetIo, RejectsMisreportShapeMismatch) {
    TempDir tmp;
    const auto d = generate_dataset(testing_support::setting(2, 1, {}, 2, 2), 1);
    auto j = to_json(d);
    j["misreports"][1][0] = nlohmann::json::array({0.1, 0.2, 0.3});
    std::ofstream(tmp / "bad.json") << j.dump();
    EXPECT_THROW(load_dataset(tmp / "bad.json"), SchemaError);

    j = to_json(d);
    j["misreports"].erase(1);
    std::ofstream(tmp / "bad2.json") << j.dump();
    EXPECT_THROW(load_dataset(tmp / "bad2.json"), SchemaError);
}

TEST(DatasetIo, RejectsGarbageAndMissingFile) {
    TempDir tmp;
    std::ofstream(tmp / "g.json") << "{not json";
    EXPECT_THROW(load_dataset(tmp / "g.json"), SchemaError);
    EXPECT_THROW(load_dataset(tmp / "missing.json"), ConfigError);
}
