// Copyright 2026 The mechsynth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

// Minimal static SVG charts: box plots and line plots.

namespace mechsynth::plot {

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// Linear-interpolated quantiles (the "type 7" convention).
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BoxStats box_stats(const std::vector<double>& v) {
    return {quantile(v, 0.0), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), quantile(v, 1.0)};
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "black";
    bool dashed = false;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double width = 640, height = 400;
    double left = 70, right = 20, top = 40, bottom = 60;
    double y0 = 0, y1 = 1;
    double x0 = 0, x1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void pad_range(double& lo, double& hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = 0;
        hi = 1;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

inline std::string open(const Frame& f, const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(f.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
    return s;
}

inline std::string y_axis(const Frame& f, const std::string& label) {
    std::string s;
    s += "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.top) + "\" x2=\"" + num(f.left) + "\" y2=\"" + num(f.height - f.bottom) +
         "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double v = f.y0 + (f.y1 - f.y0) * k / 5.0;
        const double y = f.py(v);
        s += "<line x1=\"" + num(f.left - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(f.left) + "\" y2=\"" + num(y) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(f.left - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick(v) + "</text>\n";
    }
    s += "<text transform=\"translate(14," + num((f.top + f.height - f.bottom) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(label) + "</text>\n";
    return s;
}

inline std::string zero_line(const Frame& f) {
    if (f.y0 > 0 || f.y1 < 0) return {};
    return "<line x1=\"" + num(f.left) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.width - f.right) + "\" y2=\"" + num(f.py(0)) +
           "\" stroke=\"#999\" stroke-dasharray=\"3,3\"/>\n";
}

}  // namespace detail

// One box per group: whiskers at min/max, box at the quartiles.
inline std::string boxplot(const std::vector<std::pair<std::string, std::vector<double>>>& groups, const std::string& title,
                           const std::string& ylabel) {
    detail::Frame f;
    f.width = std::max(320.0, 90.0 * static_cast<double>(groups.size()) + 100.0);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [_, v] : groups) {
        for (double x : v) {
            if (!std::isfinite(x)) continue;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    detail::pad_range(lo, hi);
    f.y0 = lo;
    f.y1 = hi;
    f.x0 = 0;
    f.x1 = static_cast<double>(std::max<std::size_t>(groups.size(), 1));
    std::string s = detail::open(f, title) + detail::y_axis(f, ylabel) + detail::zero_line(f);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<double> v;
        for (double x : groups[g].second) {
            if (std::isfinite(x)) v.push_back(x);
        }
        const double cx = f.px(static_cast<double>(g) + 0.5);
        const double half = 0.3 * (f.px(1) - f.px(0));
        s += "<text x=\"" + detail::num(cx) + "\" y=\"" + detail::num(f.height - f.bottom + 18) + "\" text-anchor=\"middle\">" +
             detail::escape(groups[g].first) + "</text>\n";
        if (v.empty()) continue;
        const auto b = box_stats(v);
        s += "<line x1=\"" + detail::num(cx) + "\" y1=\"" + detail::num(f.py(b.min)) + "\" x2=\"" + detail::num(cx) + "\" y2=\"" +
             detail::num(f.py(b.max)) + "\" stroke=\"black\"/>\n";
        s += "<rect x=\"" + detail::num(cx - half) + "\" y=\"" + detail::num(f.py(b.q3)) + "\" width=\"" + detail::num(2 * half) +
             "\" height=\"" + detail::num(std::max(0.5, f.py(b.q1) - f.py(b.q3))) + "\" fill=\"#cfe0f3\" stroke=\"black\"/>\n";
        s += "<line x1=\"" + detail::num(cx - half) + "\" y1=\"" + detail::num(f.py(b.median)) + "\" x2=\"" + detail::num(cx + half) +
             "\" y2=\"" + detail::num(f.py(b.median)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
    return s + "</svg>\n";
}

inline std::string lineplot(const std::vector<Series>& series, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    detail::Frame f;
    f.right = 150;
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    detail::pad_range(xlo, xhi);
    detail::pad_range(ylo, yhi);
    f.x0 = xlo;
    f.x1 = xhi;
    f.y0 = ylo;
    f.y1 = yhi;
    std::string out = detail::open(f, title) + detail::y_axis(f, ylabel) + detail::zero_line(f);
    out += "<line x1=\"" + detail::num(f.left) + "\" y1=\"" + detail::num(f.height - f.bottom) + "\" x2=\"" + detail::num(f.width - f.right) +
           "\" y2=\"" + detail::num(f.height - f.bottom) + "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double v = f.x0 + (f.x1 - f.x0) * k / 5.0;
        out += "<text x=\"" + detail::num(f.px(v)) + "\" y=\"" + detail::num(f.height - f.bottom + 16) + "\" text-anchor=\"middle\">" +
               detail::tick(v) + "</text>\n";
    }
    out += "<text x=\"" + detail::num((f.left + f.width - f.right) / 2) + "\" y=\"" + detail::num(f.height - 14) +
           "\" text-anchor=\"middle\">" + detail::escape(xlabel) + "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            pts += detail::num(f.px(s.x[i])) + "," + detail::num(f.py(s.y[i])) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"" +
               (s.dashed ? std::string(" stroke-dasharray=\"5,3\"") : std::string()) + " points=\"" + pts + "\"/>\n";
        const double ly = f.top + 14.0 * static_cast<double>(si);
        out += "<line x1=\"" + detail::num(f.width - f.right + 10) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
               detail::num(f.width - f.right + 30) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + s.color + "\"" +
               (s.dashed ? std::string(" stroke-dasharray=\"5,3\"") : std::string()) + "/>\n";
        out += "<text x=\"" + detail::num(f.width - f.right + 34) + "\" y=\"" + detail::num(ly + 4) + "\">" + detail::escape(s.label) +
               "</text>\n";
    }
    return out + "</svg>\n";
}

}  // namespace mechsynth::plot
