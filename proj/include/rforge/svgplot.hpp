#pragma once

#include <string>
#include <vector>

namespace rforge {

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;  // NaN entries break the polyline
};

// Minimal line chart: axes, ticks, one polyline per series, legend. Output is
// a deterministic function of the inputs.
std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<SvgSeries>& series,
                              int width = 760, int height = 440);

}  // namespace rforge
