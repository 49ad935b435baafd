#include "homduet/svg.hpp"

#include "homduet/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace homduet::cli {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        default:
            out.push_back(c);
        }
    }
    return out;
}

// Roughly five ticks at 1, 2 or 5 times a power of ten.
double nice_step(double span)
{
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace

std::string render_svg(const Plot& plot, int width, int height)
{
    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : plot.series) {
        for (const auto& p : s.points) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                continue;
            }
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y - p.err);
            y1 = std::max(y1, p.y + p.err);
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if (x1 - x0 < 1e-12) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if (y1 - y0 < 1e-12) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pad_y = 0.05 * (y1 - y0);
    y0 -= pad_y;
    y1 += pad_y;

    const double left = 70;
    const double right = width - 20;
    const double top = 40;
    const double bottom = height - 50;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (right - left); };
    auto py = [&](double y) { return bottom - (y - y0) / (y1 - y0) * (bottom - top); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(plot.title)
      << "</text>\n";
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(right) << "\" y2=\"" << fmt(bottom)
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\"" << fmt(bottom)
      << "\" stroke=\"black\"/>\n";

    const double sx = nice_step(x1 - x0);
    for (double t = std::ceil(x0 / sx) * sx; t <= x1 + 1e-9 * sx; t += sx) {
        o << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(px(t)) << "\" y2=\""
          << fmt(bottom + 5) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(bottom + 18) << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    }
    const double sy = nice_step(y1 - y0);
    for (double t = std::ceil(y0 / sy) * sy; t <= y1 + 1e-9 * sy; t += sy) {
        o << "<line x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(left) << "\" y2=\""
          << fmt(py(t)) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(py(t) + 4) << "\" text-anchor=\"end\">"
          << tick_label(t) << "</text>\n";
    }
    o << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
      << escape(plot.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << fmt((top + bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fmt((top + bottom) / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

    int legend_row = 0;
    for (const auto& s : plot.series) {
        if (s.line) {
            o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& p : s.points) {
                if (std::isfinite(p.x) && std::isfinite(p.y)) {
                    o << fmt(px(p.x)) << "," << fmt(py(p.y)) << " ";
                }
            }
            o << "\"/>\n";
        } else {
            for (const auto& p : s.points) {
                if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                    continue;
                }
                if (p.err > 0.0) {
                    o << "<line x1=\"" << fmt(px(p.x)) << "\" y1=\"" << fmt(py(p.y - p.err)) << "\" x2=\""
                      << fmt(px(p.x)) << "\" y2=\"" << fmt(py(p.y + p.err)) << "\" stroke=\"" << s.color << "\"/>";
                }
                o << "<circle cx=\"" << fmt(px(p.x)) << "\" cy=\"" << fmt(py(p.y)) << "\" r=\"3\" fill=\"" << s.color
                  << "\"/>\n";
            }
        }
        if (!s.label.empty()) {
            const double ly = top + 6 + 16 * legend_row++;
            o << "<rect x=\"" << fmt(right - 150) << "\" y=\"" << fmt(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
              << s.color << "\"/><text x=\"" << fmt(right - 135) << "\" y=\"" << fmt(ly + 1) << "\">"
              << escape(s.label) << "</text>\n";
        }
    }
    o << "</svg>\n";
    return o.str();
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << text;
    if (!out) {
        throw Error("write failed: " + path);
    }
}

}  // namespace homduet::cli
