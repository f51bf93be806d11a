#include "pessilab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pessilab {

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void include(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void finalize() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    double frac(double v) const { return (v - lo) / (hi - lo); }
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& left_label,
                      const std::string& right_label,
                      const std::vector<SvgSeries>& series, int width,
                      int height) {
    const double ml = 64, mr = 64, mt = 40, mb = 48;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;

    Range xr, lr, rr;
    bool any_right = false;
    for (const SvgSeries& s : series) {
        for (double v : s.x) xr.include(v);
        for (double v : s.y) (s.right_axis ? rr : lr).include(v);
        any_right = any_right || s.right_axis;
    }
    xr.finalize();
    lr.finalize();
    rr.finalize();

    auto px = [&](double v) { return ml + xr.frac(v) * pw; };
    auto py_left = [&](double v) { return mt + (1.0 - lr.frac(v)) * ph; };
    auto py_right = [&](double v) { return mt + (1.0 - rr.frac(v)) * ph; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\">\n"
        << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << title
        << "</text>\n";

    // Axes.
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\""
        << ml + pw << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
        << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    if (any_right) {
        svg << "<line x1=\"" << ml + pw << "\" y1=\"" << mt << "\" x2=\""
            << ml + pw << "\" y2=\"" << mt + ph
            << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    }

    // Ticks, five per axis.
    for (int i = 0; i <= 4; ++i) {
        const double f = i / 4.0;
        const double xv = xr.lo + f * (xr.hi - xr.lo);
        const double xp = ml + f * pw;
        svg << "<text x=\"" << xp << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"11\">" << num(xv) << "</text>\n";
        const double lv = lr.lo + f * (lr.hi - lr.lo);
        svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + (1 - f) * ph + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
            << "font-size=\"11\">" << num(lv) << "</text>\n";
        if (any_right) {
            const double rv = rr.lo + f * (rr.hi - rr.lo);
            svg << "<text x=\"" << ml + pw + 6 << "\" y=\""
                << mt + (1 - f) * ph + 4
                << "\" text-anchor=\"start\" font-family=\"sans-serif\" "
                << "font-size=\"11\">" << num(rv) << "</text>\n";
        }
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">" << x_label << "</text>\n"
        << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
        << ")\">" << left_label << "</text>\n";
    if (any_right) {
        svg << "<text x=\"" << width - 14 << "\" y=\"" << mt + ph / 2
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"12\" transform=\"rotate(90 " << width - 14 << " "
            << mt + ph / 2 << ")\">" << right_label << "</text>\n";
    }

    // Series.
    double legend_y = mt + 6;
    for (const SvgSeries& s : series) {
        auto py = [&](double v) {
            return s.right_axis ? py_right(v) : py_left(v);
        };
        if (s.points) {
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                svg << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\""
                    << num(py(s.y[i])) << "\" r=\"2.2\" fill=\"" << s.color
                    << "\" fill-opacity=\"0.6\"/>\n";
            }
        } else {
            svg << "<polyline fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                svg << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
            }
            svg << "\"/>\n";
        }
        svg << "<rect x=\"" << ml + 8 << "\" y=\"" << legend_y
            << "\" width=\"12\" height=\"4\" fill=\"" << s.color << "\"/>\n"
            << "<text x=\"" << ml + 24 << "\" y=\"" << legend_y + 6
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
            << "</text>\n";
        legend_y += 16;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace pessilab
