#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace pathforge::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
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

} // namespace detail

/// Fixed-size line chart. Output depends only on the inputs (fixed palette,
/// fixed number formatting), so identical data gives identical bytes.
inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
    constexpr double width = 640, height = 400, left = 64, right = 160, top = 40, bottom = 48;
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };
    using detail::num;

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + detail::escape(title) +
           "</text>\n";
    out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        out += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 16) + "\" text-anchor=\"middle\" font-size=\"11\">" +
               num(xv) + "</text>\n";
        out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
               num(yv) + "</text>\n";
    }
    out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height - 8) + "\" text-anchor=\"middle\" font-size=\"12\">" +
           detail::escape(x_label) + "</text>\n";
    out += "<text x=\"14\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
           num(top + ph / 2) + ")\">" + detail::escape(y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < std::min(series[s].x.size(), series[s].y.size()); ++i) {
            if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
            if (!points.empty()) points += ' ';
            points += num(px(series[s].x[i])) + "," + num(py(series[s].y[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
               "\"/>\n";
        const double ly = top + 14 + 18 * static_cast<double>(s);
        out += "<line x1=\"" + num(left + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 32) + "\" y2=\"" +
               num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + num(left + pw + 36) + "\" y=\"" + num(ly + 4) + "\" font-size=\"11\">" +
               detail::escape(series[s].name) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

} // namespace pathforge::svg
