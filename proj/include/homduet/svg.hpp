#pragma once

#include <string>
#include <vector>

namespace homduet::cli {

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
    double err = 0.0;
};

struct Series {
    std::string label;
    std::vector<SeriesPoint> points;
    bool line = false;  // polyline instead of markers with error bars
    std::string color = "#1f77b4";
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

/// Static SVG with axes, ticks, markers, error bars and polylines. Output is
/// a pure function of the plot (fixed number formatting), so equal inputs
/// give byte-identical files.
std::string render_svg(const Plot& plot, int width = 640, int height = 420);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace homduet::cli
