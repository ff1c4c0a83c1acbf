#pragma once

// Static SVG figure: first channel on top, score trace below, ground-truth
// anomaly segments shaded across both panels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paano/error.hpp"
#include "paano/metrics.hpp"

namespace paano {

inline constexpr std::size_t kMaxPolylinePoints = 4000;

// (index, value) pairs covering `values` with at most max_points entries:
// each bucket contributes its minimum and maximum in time order.
inline std::vector<std::pair<std::size_t, double>> downsample(std::span<const double> values, std::size_t max_points) {
    std::vector<std::pair<std::size_t, double>> out;
    const std::size_t n = values.size();
    if (n <= max_points) {
        for (std::size_t i = 0; i < n; ++i) out.emplace_back(i, values[i]);
        return out;
    }
    const std::size_t buckets = std::max<std::size_t>(1, max_points / 2);
    for (std::size_t b = 0; b < buckets; ++b) {
        const std::size_t lo = b * n / buckets;
        const std::size_t hi = (b + 1) * n / buckets;
        if (lo >= hi) continue;
        std::size_t imin = lo;
        std::size_t imax = lo;
        for (std::size_t i = lo; i < hi; ++i) {
            if (values[i] < values[imin]) imin = i;
            if (values[i] > values[imax]) imax = i;
        }
        if (imin == imax) {
            out.emplace_back(imin, values[imin]);
        } else {
            out.emplace_back(std::min(imin, imax), values[std::min(imin, imax)]);
            out.emplace_back(std::max(imin, imax), values[std::max(imin, imax)]);
        }
    }
    return out;
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct Panel {
    double top;
    double height;
};

inline std::string svg_polyline(std::span<const double> values, double left, double width, Panel panel,
                                const char* colour) {
    const auto pts = downsample(values, kMaxPolylinePoints);
    double lo = values[0];
    double hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    const double n = static_cast<double>(std::max<std::size_t>(1, values.size() - 1));
    std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1\" points=\"";
    for (const auto& [i, v] : pts) {
        const double x = left + width * static_cast<double>(i) / n;
        const double y = panel.top + panel.height * (1.0 - (v - lo) / span);
        s += svg_num(x) + "," + svg_num(y) + " ";
    }
    s += "\"/>\n";
    return s;
}

}  // namespace detail

inline std::string render_svg(std::span<const double> series, std::span<const double> scores,
                              std::span<const std::uint8_t> labels) {
    if (series.empty()) throw DataError("plot: empty series");
    if (scores.size() != series.size()) {
        throw DataError("plot: series has " + std::to_string(series.size()) + " rows but scores have " +
                        std::to_string(scores.size()));
    }
    if (!labels.empty() && labels.size() != series.size()) {
        throw DataError("plot: series has " + std::to_string(series.size()) + " rows but labels have " +
                        std::to_string(labels.size()));
    }
    constexpr double kWidth = 1200.0;
    constexpr double kHeight = 500.0;
    constexpr double kLeft = 50.0;
    constexpr double kPlotWidth = kWidth - 2 * kLeft;
    const detail::Panel top{30.0, 200.0};
    const detail::Panel bottom{270.0, 200.0};
    const double n = static_cast<double>(std::max<std::size_t>(1, series.size() - 1));

    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(kWidth) + "\" height=\"" +
           detail::svg_num(kHeight) + "\" viewBox=\"0 0 1200 500\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"1200\" height=\"500\" fill=\"white\"/>\n";
    for (const auto& [a, b] : anomaly_segments(labels)) {
        const double x0 = kLeft + kPlotWidth * static_cast<double>(a) / n;
        const double x1 = kLeft + kPlotWidth * static_cast<double>(b) / n;
        svg += "<rect class=\"anomaly\" x=\"" + detail::svg_num(x0) + "\" y=\"" + detail::svg_num(top.top) +
               "\" width=\"" + detail::svg_num(std::max(1.0, x1 - x0)) + "\" height=\"" +
               detail::svg_num(bottom.top + bottom.height - top.top) + "\" fill=\"#f4a0a0\" fill-opacity=\"0.5\"/>\n";
    }
    svg += "<text x=\"" + detail::svg_num(kLeft) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">series</text>\n";
    svg += "<text x=\"" + detail::svg_num(kLeft) +
           "\" y=\"260\" font-family=\"sans-serif\" font-size=\"12\">anomaly score</text>\n";
    svg += detail::svg_polyline(series, kLeft, kPlotWidth, top, "#1f4e9c");
    svg += detail::svg_polyline(scores, kLeft, kPlotWidth, bottom, "#c0392b");
    svg += "</svg>\n";
    return svg;
}

}  // namespace paano
