// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace mechsynth {

struct KMedianSolution {
    std::vector<double> locations;  // K values, ascending; padded with repeats when K > #points
    double cost = 0.0;              // raw weighted sum of distances (not normalized)
    std::vector<std::size_t> segment_starts;  // start index of every cluster in sorted order
    std::vector<std::size_t> order;           // sorted position -> input index
};

namespace detail {

// Prefix sums over points sorted ascending; gives O(log m) segment costs.
class SegmentCosts {
public:
    SegmentCosts(std::span<const double> xs, std::span<const double> ws) : x_(xs.begin(), xs.end()) {
        const std::size_t m = xs.size();
        w_.assign(m + 1, 0.0);
        s_.assign(m + 1, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            w_[i + 1] = w_[i] + ws[i];
            s_[i + 1] = s_[i] + ws[i] * xs[i];
        }
    }

    // First index t in [a, b] whose cumulative segment weight reaches half.
    std::size_t median(std::size_t a, std::size_t b) const {
        const double half = (w_[b + 1] - w_[a]) / 2.0;
        std::size_t lo = a, hi = b;
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (w_[mid + 1] - w_[a] >= half) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        return lo;
    }

    // One-facility cost of the inclusive segment [a, b].
    double cost(std::size_t a, std::size_t b) const {
        const std::size_t t = median(a, b);
        const double x = x_[t];
        const double left = x * (w_[t + 1] - w_[a]) - (s_[t + 1] - s_[a]);
        const double right = (s_[b + 1] - s_[t + 1]) - x * (w_[b + 1] - w_[t + 1]);
        return std::max(0.0, left) + std::max(0.0, right);
    }

    double point(std::size_t i) const { return x_[i]; }

private:
    std::vector<double> x_;
    std::vector<double> w_;
    std::vector<double> s_;
};

}  // namespace detail

// Exact weighted 1-D K-median. D[k][i] = min_j D[k-1][j] + C(j, i-1) over the
// sorted points, with facilities at segment weighted medians. Ties resolve to
// the earliest split. Above `dc_threshold` points the layer minimisation uses
// divide and conquer, which is exact here because the optimal split index is
// monotone for 1-D K-median.
inline KMedianSolution kmedian_1d(std::span<const double> points, std::span<const double> weights, std::size_t K,
                                  std::size_t dc_threshold = 256) {
    if (K < 1) throw std::invalid_argument("kmedian_1d: K must be >= 1");
    if (points.size() != weights.size()) throw std::invalid_argument("kmedian_1d: points/weights length mismatch");
    if (points.empty()) throw std::invalid_argument("kmedian_1d: no points");
    const std::size_t m = points.size();

    KMedianSolution sol;
    sol.order.resize(m);
    std::iota(sol.order.begin(), sol.order.end(), std::size_t{0});
    std::stable_sort(sol.order.begin(), sol.order.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    std::vector<double> xs(m), ws(m);
    for (std::size_t i = 0; i < m; ++i) {
        xs[i] = points[sol.order[i]];
        ws[i] = weights[sol.order[i]];
    }
    const detail::SegmentCosts seg(xs, ws);
    const std::size_t k_eff = std::min(K, m);
    constexpr double inf = std::numeric_limits<double>::infinity();

    // prev[i]: best cost of the first i points with (k-1) facilities.
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    std::vector<std::vector<std::size_t>> split(k_eff + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = 1; i <= m; ++i) prev[i] = seg.cost(0, i - 1);

    for (std::size_t k = 2; k <= k_eff; ++k) {
        std::fill(cur.begin(), cur.end(), inf);
        auto best_for = [&](std::size_t i, std::size_t jlo, std::size_t jhi) {
            double best = inf;
            std::size_t arg = jlo;
            for (std::size_t j = jlo; j <= jhi; ++j) {
                const double v = prev[j] + seg.cost(j, i - 1);
                if (v < best) {
                    best = v;
                    arg = j;
                }
            }
            cur[i] = best;
            split[k][i] = arg;
        };
        if (m <= dc_threshold) {
            for (std::size_t i = k; i <= m; ++i) best_for(i, k - 1, i - 1);
        } else {
            // solve(i range [lo, hi], split range [olo, ohi])
            auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t olo, std::size_t ohi) -> void {
                if (lo > hi) return;
                const std::size_t mid = lo + (hi - lo) / 2;
                best_for(mid, std::max(olo, k - 1), std::min(ohi, mid - 1));
                const std::size_t opt = split[k][mid];
                if (mid > lo) self(self, lo, mid - 1, olo, opt);
                self(self, mid + 1, hi, opt, ohi);
            };
            solve(solve, k, m, k - 1, m - 1);
        }
        std::swap(prev, cur);
    }

    sol.cost = prev[m];
    std::vector<std::size_t> ends;  // exclusive end of each segment, back to front
    std::size_t i = m;
    for (std::size_t k = k_eff; k >= 2; --k) {
        ends.push_back(i);
        i = split[k][i];
    }
    ends.push_back(i);
    std::reverse(ends.begin(), ends.end());
    std::size_t start = 0;
    for (std::size_t end : ends) {
        sol.segment_starts.push_back(start);
        sol.locations.push_back(seg.point(seg.median(start, end - 1)));
        start = end;
    }
    while (sol.locations.size() < K) sol.locations.push_back(sol.locations.back());
    return sol;
}

}  // namespace mechsynth
