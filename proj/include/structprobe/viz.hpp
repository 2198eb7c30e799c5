#pragma once

// Standalone SVG 1.1 renderings: dependency arc diagrams and line charts.
// Output is a pure function of the input; numbers are printed with fixed
// precision so identical specs give identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "structprobe/treebank.hpp"

namespace structprobe {

struct Rgb {
    int r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kLowStrengthColor{0xE6, 0x9F, 0x00};   // orange
inline constexpr Rgb kHighStrengthColor{0x00, 0x72, 0xB2};  // blue

inline std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02X%02X%02X", c.r, c.g, c.b);
    return buf;
}

/// Maps strength to color. Strengths are clamped to [0, 2]; by default the
/// interpolation domain is the clamped range of the strengths being drawn,
/// falling back to the full [0, 2] when they are all equal.
struct StrengthScale {
    static constexpr double kMin = 0.0;
    static constexpr double kMax = 2.0;
    double lo = kMin;
    double hi = kMax;

    static StrengthScale fixed() { return {}; }

    static StrengthScale fit(const std::vector<double>& strengths) {
        if (strengths.empty()) return {};
        auto [mn, mx] = std::minmax_element(strengths.begin(), strengths.end());
        StrengthScale s{std::clamp(*mn, kMin, kMax), std::clamp(*mx, kMin, kMax)};
        if (!(s.hi > s.lo)) return {};
        return s;
    }

    Rgb color(double strength) const {
        const double x = std::clamp(strength, kMin, kMax);
        const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
        auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + t * (b - a))); };
        return {mix(kLowStrengthColor.r, kHighStrengthColor.r), mix(kLowStrengthColor.g, kHighStrengthColor.g),
                mix(kLowStrengthColor.b, kHighStrengthColor.b)};
    }
};

struct StrengthEdge {
    Edge edge;
    double strength = 0;
};

struct ArcDiagramSpec {
    std::vector<std::string> tokens;
    std::vector<Edge> gold_edges;
    std::vector<StrengthEdge> predicted_edges;
    std::string title;
    std::optional<StrengthScale> scale;  // unset: fit to predicted strengths
    double arc_height_per_span = 18.0;
    double font_size = 14.0;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string svg_open(double w, double h) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\">\n";
}

}  // namespace detail

inline std::string render_arcs(const ArcDiagramSpec& spec) {
    using detail::num;
    const std::size_t n = spec.tokens.size();
    if (n == 0) throw std::invalid_argument("arc diagram needs at least one token");
    auto check = [n](const Edge& e) {
        if (e.first < 1 || e.second > n || e.first == e.second)
            throw std::invalid_argument("edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                                        ") outside token range 1.." + std::to_string(n));
    };
    for (const auto& e : spec.gold_edges) check(e);
    for (const auto& e : spec.predicted_edges) check(e.edge);

    // Token centers; width grows with word length (approximate glyph width 0.6em).
    const double margin = 30;
    std::vector<double> x(n);
    double cursor = margin;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = std::max(50.0, 0.6 * spec.font_size * static_cast<double>(spec.tokens[i].size()) + 20);
        x[i] = cursor + w / 2;
        cursor += w;
    }
    const double width = cursor + margin;

    std::size_t max_span = 1;
    for (const auto& e : spec.gold_edges) max_span = std::max(max_span, e.second - e.first);
    for (const auto& e : spec.predicted_edges) max_span = std::max(max_span, e.edge.second - e.edge.first);
    const double arc_room = spec.arc_height_per_span * static_cast<double>(max_span) + 10;
    const double title_h = spec.title.empty() ? 0 : 30;
    const double baseline = title_h + arc_room + 20;
    const double legend_y = baseline + 20 + arc_room + 20;
    const double height = legend_y + 50;

    std::vector<double> strengths;
    for (const auto& e : spec.predicted_edges) strengths.push_back(e.strength);
    const StrengthScale scale = spec.scale ? *spec.scale : StrengthScale::fit(strengths);

    std::ostringstream os;
    os << detail::svg_open(width, height);
    os << "<defs><linearGradient id=\"strength-scale\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">"
       << "<stop offset=\"0\" stop-color=\"" << hex(kLowStrengthColor) << "\"/>"
       << "<stop offset=\"1\" stop-color=\"" << hex(kHighStrengthColor) << "\"/>"
       << "</linearGradient></defs>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">"
           << detail::xml_escape(spec.title) << "</text>\n";

    // Gold arcs above the baseline.
    os << "<g fill=\"none\" stroke=\"black\" stroke-width=\"1.5\">\n";
    for (const auto& e : spec.gold_edges) {
        const double x1 = x[e.first - 1], x2 = x[e.second - 1];
        const double h = spec.arc_height_per_span * static_cast<double>(e.second - e.first) + 10;
        const double y = baseline - spec.font_size;
        os << "<path class=\"gold-arc\" d=\"M " << num(x1) << " " << num(y) << " C " << num(x1) << " " << num(y - h)
           << " " << num(x2) << " " << num(y - h) << " " << num(x2) << " " << num(y) << "\"/>\n";
    }
    os << "</g>\n";

    // Predicted arcs below, colored by strength.
    os << "<g fill=\"none\" stroke-width=\"2\">\n";
    for (const auto& e : spec.predicted_edges) {
        const double x1 = x[e.edge.first - 1], x2 = x[e.edge.second - 1];
        const double h = spec.arc_height_per_span * static_cast<double>(e.edge.second - e.edge.first) + 10;
        const double y = baseline + 8;
        os << "<path class=\"pred-arc\" stroke=\"" << hex(scale.color(e.strength)) << "\" d=\"M " << num(x1) << " "
           << num(y) << " C " << num(x1) << " " << num(y + h) << " " << num(x2) << " " << num(y + h) << " " << num(x2)
           << " " << num(y) << "\"><title>strength " << num(e.strength) << "</title></path>\n";
    }
    os << "</g>\n";

    os << "<g text-anchor=\"middle\" font-size=\"" << num(spec.font_size) << "\">\n";
    for (std::size_t i = 0; i < n; ++i)
        os << "<text x=\"" << num(x[i]) << "\" y=\"" << num(baseline) << "\">" << detail::xml_escape(spec.tokens[i])
           << "</text>\n";
    os << "</g>\n";

    // Legend.
    const double lx = margin, lw = 160;
    os << "<g font-size=\"11\">\n"
       << "<text x=\"" << num(lx) << "\" y=\"" << num(legend_y - 6) << "\">gold (above, black); predicted (below) "
       << "colored by strength = d_B / d_T, clamped to [0, 2]</text>\n"
       << "<rect x=\"" << num(lx) << "\" y=\"" << num(legend_y) << "\" width=\"" << num(lw)
       << "\" height=\"10\" fill=\"url(#strength-scale)\"/>\n"
       << "<text x=\"" << num(lx) << "\" y=\"" << num(legend_y + 24) << "\">" << num(scale.lo) << "</text>\n"
       << "<text x=\"" << num(lx + lw) << "\" y=\"" << num(legend_y + 24) << "\" text-anchor=\"end\">" << num(scale.hi)
       << "</text>\n"
       << "</g>\n";
    os << "</svg>\n";
    return os.str();
}

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct LineChartSpec {
    std::vector<Series> series;
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log2_x = false;  // for rank sweeps
};

/// Vertical axis range: data min/max padded by 5% of the span.
inline std::pair<double, double> padded_range(double mn, double mx) {
    double pad = 0.05 * (mx - mn);
    if (pad == 0) pad = mn == 0 ? 1.0 : 0.05 * std::abs(mn);
    return {mn - pad, mx + pad};
}

inline std::string render_line_chart(const LineChartSpec& spec) {
    using detail::num;
    if (spec.series.empty()) throw std::invalid_argument("line chart needs at least one series");
    std::set<double> xs;
    double ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : spec.series) {
        if (s.points.empty()) throw std::invalid_argument("series '" + s.name + "' is empty");
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            const auto [px, py] = s.points[i];
            if (!std::isfinite(px) || !std::isfinite(py))
                throw std::invalid_argument("series '" + s.name + "' has a non-finite point");
            if (i > 0 && !(px > s.points[i - 1].first))
                throw std::invalid_argument("series '" + s.name + "' x values are not strictly increasing");
            if (spec.log2_x && !(px > 0)) throw std::invalid_argument("log-scale x values must be positive");
            xs.insert(px);
            ymin = std::min(ymin, py);
            ymax = std::max(ymax, py);
        }
    }
    const auto [ylo, yhi] = padded_range(ymin, ymax);
    auto tx = [&](double v) { return spec.log2_x ? std::log2(v) : v; };
    double xlo = tx(*xs.begin()), xhi = tx(*xs.rbegin());
    if (xhi == xlo) {
        xlo -= 1;
        xhi += 1;
    }

    const double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 55;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double v) { return left + (tx(v) - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double v) { return top + (yhi - v) / (yhi - ylo) * ph; };

    static constexpr const char* palette[] = {"#0072B2", "#D55E00", "#009E73", "#CC79A7",
                                              "#E69F00", "#56B4E9", "#F0E442", "#000000"};

    std::ostringstream os;
    os << detail::svg_open(W, H);
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
           << detail::xml_escape(spec.title) << "</text>\n";

    os << "<g stroke=\"black\" stroke-width=\"1\">\n"
       << "<line class=\"axis\" x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw)
       << "\" y2=\"" << num(top + ph) << "\"/>\n"
       << "<line class=\"axis\" x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left)
       << "\" y2=\"" << num(top + ph) << "\"/>\n";
    for (double v : xs)
        os << "<line class=\"x-tick\" x1=\"" << num(px(v)) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(px(v))
           << "\" y2=\"" << num(top + ph + 5) << "\"/>\n";
    constexpr int kYTicks = 5;
    for (int i = 0; i <= kYTicks; ++i) {
        const double v = ylo + (yhi - ylo) * i / kYTicks;
        os << "<line class=\"y-tick\" x1=\"" << num(left - 5) << "\" y1=\"" << num(py(v)) << "\" x2=\"" << num(left)
           << "\" y2=\"" << num(py(v)) << "\"/>\n";
    }
    os << "</g>\n";

    os << "<g font-size=\"11\">\n";
    for (double v : xs) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        os << "<text x=\"" << num(px(v)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << buf
           << "</text>\n";
    }
    for (int i = 0; i <= kYTicks; ++i) {
        const double v = ylo + (yhi - ylo) * i / kYTicks;
        os << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << num(v)
           << "</text>\n";
    }
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\">"
       << detail::xml_escape(spec.x_label) << "</text>\n"
       << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << num(top + ph / 2) << ")\">" << detail::xml_escape(spec.y_label) << "</text>\n";
    os << "</g>\n";

    for (std::size_t s = 0; s < spec.series.size(); ++s) {
        const auto* color = palette[s % std::size(palette)];
        const auto& series = spec.series[s];
        os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series.points.size(); ++i)
            os << (i ? " " : "") << num(px(series.points[i].first)) << "," << num(py(series.points[i].second));
        os << "\"/>\n";
        for (const auto& [vx, vy] : series.points)
            os << "<circle class=\"marker\" cx=\"" << num(px(vx)) << "\" cy=\"" << num(py(vy)) << "\" r=\"3\" fill=\""
               << color << "\"/>\n";
        const double ly = top + 10 + 18 * static_cast<double>(s);
        os << "<line x1=\"" << num(left + pw + 15) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 35)
           << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << num(left + pw + 40) << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
           << detail::xml_escape(series.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace structprobe
