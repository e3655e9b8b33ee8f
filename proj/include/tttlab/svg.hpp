#pragma once

#include <string>
#include <vector>

namespace tttlab {

// Minimal line-plot emitter: fixed 800x500 canvas, axes, legend, one
// polyline per series. No plotting dependency.
struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

std::string render_line_plot(const std::string& title, const std::string& x_label,
                             const std::string& y_label, const std::vector<PlotSeries>& series);

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

}  // namespace tttlab
