#include <gtest/gtest.h>

#include <regex>

#include "structprobe/viz.hpp"

using namespace structprobe;

namespace {

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

std::vector<std::string> pred_strokes(const std::string& svg) {
    std::vector<std::string> out;
    std::regex re("class=\"pred-arc\" stroke=\"(#[0-9A-F]{6})\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
        out.push_back((*it)[1]);
    return out;
}

}  // namespace

TEST(ArcDiagram, TwoTokensTwoArcs) {
    ArcDiagramSpec spec{{"I", "called"}, {Edge(1, 2)}, {{Edge(1, 2), 1.0}}, "", std::nullopt};
    const auto svg = render_arcs(spec);
    EXPECT_EQ(count(svg, "<path "), 2u);
    EXPECT_EQ(count(svg, "class=\"gold-arc\""), 1u);
    EXPECT_EQ(count(svg, "class=\"pred-arc\""), 1u);
    EXPECT_NE(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\""), std::string::npos);
    EXPECT_NE(svg.find("d_B / d_T"), std::string::npos);
}

TEST(ArcDiagram, RenderingIsDeterministic) {
    ArcDiagramSpec spec{{"He", "listens", "and", "is", "excellent"},
                        {Edge(1, 2), Edge(2, 3), Edge(2, 4), Edge(4, 5)},
                        {{Edge(1, 2), 0.4}, {Edge(2, 5), 1.3}, {Edge(3, 4), 0.9}, {Edge(4, 5), 1.1}},
                        "layer 6 <rbf>",
                        std::nullopt};
    const auto a = render_arcs(spec);
    EXPECT_EQ(a, render_arcs(spec));
    EXPECT_NE(a.find("layer 6 &lt;rbf&gt;"), std::string::npos);
}

TEST(ArcDiagram, EndpointColors) {
    ArcDiagramSpec spec{{"a", "b", "c"}, {}, {{Edge(1, 2), 0.1}, {Edge(2, 3), 1.9}}, "", std::nullopt};
    const auto strokes = pred_strokes(render_arcs(spec));
    ASSERT_EQ(strokes.size(), 2u);
    EXPECT_EQ(strokes[0], "#E69F00");
    EXPECT_EQ(strokes[1], "#0072B2");
}

TEST(ArcDiagram, FixedScaleInterpolatesOverZeroToTwo) {
    const auto s = StrengthScale::fixed();
    EXPECT_EQ(s.color(0.0), kLowStrengthColor);
    EXPECT_EQ(s.color(2.0), kHighStrengthColor);
    EXPECT_EQ(s.color(-3.0), kLowStrengthColor);
    EXPECT_EQ(s.color(9.0), kHighStrengthColor);
    // midpoint of (230,159,0) and (0,114,178)
    EXPECT_EQ(s.color(1.0), (Rgb{115, 137, 89}));
    // blue channel grows monotonically with strength
    int prev = -1;
    for (double x = -0.5; x <= 2.5; x += 0.05) {
        const int b = s.color(x).b;
        EXPECT_GE(b, prev);
        prev = b;
    }
}

TEST(ArcDiagram, FitFallsBackToFullRangeWhenDegenerate) {
    auto s = StrengthScale::fit({1.0, 1.0});
    EXPECT_EQ(s.lo, 0.0);
    EXPECT_EQ(s.hi, 2.0);
    s = StrengthScale::fit({-1.0, 5.0});
    EXPECT_EQ(s.lo, 0.0);
    EXPECT_EQ(s.hi, 2.0);
}

TEST(ArcDiagram, RejectsInvalidSpecs) {
    EXPECT_THROW(render_arcs(ArcDiagramSpec{}), std::invalid_argument);
    ArcDiagramSpec spec{{"a", "b"}, {Edge(1, 3)}, {}, "", std::nullopt};
    EXPECT_THROW(render_arcs(spec), std::invalid_argument);
}

TEST(LineChart, SinglePoint) {
    LineChartSpec spec{{{"rbf", {{6, 77.3}}}}, "", "layer", "UUAS"};
    const auto svg = render_line_chart(spec);
    EXPECT_EQ(count(svg, "class=\"marker\""), 1u);
    EXPECT_EQ(count(svg, "class=\"series\""), 1u);
}

TEST(LineChart, FourSeriesTwelveLayers) {
    LineChartSpec spec;
    for (const char* name : {"linear", "poly", "rbf", "sigmoid"}) {
        Series s{name, {}};
        for (int l = 1; l <= 12; ++l) s.points.emplace_back(l, 50 + l + name[0] % 7);
        spec.series.push_back(s);
    }
    const auto svg = render_line_chart(spec);
    EXPECT_EQ(count(svg, "<polyline"), 4u);
    EXPECT_EQ(count(svg, "class=\"x-tick\""), 12u);
    EXPECT_EQ(count(svg, "class=\"marker\""), 48u);
    EXPECT_EQ(svg, render_line_chart(spec));
}

TEST(LineChart, PaddingRule) {
    auto [lo, hi] = padded_range(60.0, 80.0);
    EXPECT_DOUBLE_EQ(lo, 59.0);
    EXPECT_DOUBLE_EQ(hi, 81.0);
}

TEST(LineChart, RejectsBadInput) {
    EXPECT_THROW(render_line_chart(LineChartSpec{}), std::invalid_argument);
    EXPECT_THROW(render_line_chart(LineChartSpec{{{"empty", {}}}}), std::invalid_argument);
    EXPECT_THROW(render_line_chart(LineChartSpec{{{"dup", {{1, 2}, {1, 3}}}}}), std::invalid_argument);
}
