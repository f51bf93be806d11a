#pragma once

#include <string>
#include <vector>

namespace pessilab {

struct SvgSeries {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
    bool right_axis = false;  // plotted against a secondary y scale
    bool points = false;      // scatter instead of polyline
};

/// Minimal self-contained chart: left/right y axes, ticks, legend.
std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& left_label,
                      const std::string& right_label,
                      const std::vector<SvgSeries>& series, int width = 760,
                      int height = 480);

}  // namespace pessilab
