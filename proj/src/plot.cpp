#include "stackplay/plot.hpp"

#include "stackplay/common.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace stackplay::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
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

std::string header(int w, int h, const std::string& title) {
    return fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        w, h, w, h, w / 2, escape(title));
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    }
    double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

// Plot area shared by scatter and line charts.
constexpr int kW = 640, kH = 480, kL = 60, kR = 150, kT = 30, kB = 50;

std::string axes(const Range& xr, const Range& yr) {
    std::string s = fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                                kL, kT, kW - kL - kR, kH - kT - kB);
    for (int i = 0; i <= 4; ++i) {
        const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        const double px = xr.map(xv, kL, kW - kR);
        const double py = yr.map(yv, kH - kB, kT);
        s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", px, kH - kB + 15, xv);
        s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kL - 4, py + 4, yv);
    }
    return s;
}

std::string legend(const std::vector<Series>& series) {
    std::string s;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const int y = kT + 10 + static_cast<int>(i) * 16;
        s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", kW - kR + 10, y - 9,
                         kPalette[i % 10]);
        s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kW - kR + 25, y, escape(series[i].name));
    }
    return s;
}

}  // namespace

std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels,
                        const std::string& title) {
    const int n = static_cast<int>(values.size());
    const int cell = 48, left = 90, top = 40;
    const int w = left + n * cell + 20, h = top + n * cell + 90;
    double hi = 0.0;
    for (const auto& row : values)
        for (double v : row) hi = std::max(hi, v);
    std::string s = header(w, h, title);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double v = values[r][c];
            const int shade = hi > 0 ? 255 - static_cast<int>(std::lround(200.0 * v / hi)) : 255;
            s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},255)\" "
                             "stroke=\"#999\"/>\n",
                             left + c * cell, top + r * cell, cell, cell, shade, shade);
            s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", left + c * cell + cell / 2,
                             top + r * cell + cell / 2 + 4, v);
        }
        const std::string lab = r < static_cast<int>(labels.size()) ? escape(labels[r]) : "";
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 4,
                         top + r * cell + cell / 2 + 4, lab);
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-45 {} {})\">{}</text>\n",
                         left + r * cell + cell / 2, top + n * cell + 14, left + r * cell + cell / 2,
                         top + n * cell + 14, lab);
    }
    return s + "</svg>\n";
}

std::string scatter_svg(const std::vector<Series>& groups, const std::string& title) {
    Range xr, yr;
    for (const Series& g : groups) {
        for (double v : g.x) xr.add(v);
        for (double v : g.y) yr.add(v);
    }
    xr.finish();
    yr.finish();
    std::string s = header(kW, kH, title) + axes(xr, yr);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Series& g = groups[i];
        for (std::size_t k = 0; k < std::min(g.x.size(), g.y.size()); ++k) {
            s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
                             xr.map(g.x[k], kL, kW - kR), yr.map(g.y[k], kH - kB, kT), kPalette[i % 10]);
        }
    }
    return s + legend(groups) + "</svg>\n";
}

std::string line_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
    Range xr, yr;
    for (const Series& g : series) {
        for (double v : g.x) xr.add(v);
        for (double v : g.y) yr.add(v);
    }
    xr.finish();
    yr.finish();
    std::string s = header(kW, kH, title) + axes(xr, yr);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& g = series[i];
        std::string pts;
        for (std::size_t k = 0; k < std::min(g.x.size(), g.y.size()); ++k) {
            if (!std::isfinite(g.x[k]) || !std::isfinite(g.y[k])) continue;
            pts += fmt::format("{:.2f},{:.2f} ", xr.map(g.x[k], kL, kW - kR), yr.map(g.y[k], kH - kB, kT));
        }
        s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", pts,
                         kPalette[i % 10]);
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (kL + kW - kR) / 2, kH - 12,
                     escape(x_label));
    s += fmt::format("<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
                     (kT + kH - kB) / 2, (kT + kH - kB) / 2, escape(y_label));
    return s + legend(series) + "</svg>\n";
}

std::string bar_svg(const std::vector<std::string>& categories, const std::vector<double>& values,
                    const std::vector<double>& errors, const std::string& title, double y_max) {
    const int n = static_cast<int>(categories.size());
    const int bw = 40, gap = 20, left = 60, top = 30, ph = 300;
    const int w = left + n * (bw + gap) + 20, h = top + ph + 170;
    std::string s = header(w, h, title);
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top + ph, w - 10,
                     top + ph);
    for (int i = 0; i <= 4; ++i) {
        const double v = y_max * i / 4.0;
        s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 4,
                         top + ph - ph * i / 4.0 + 4, v);
    }
    for (int i = 0; i < n; ++i) {
        const double v = std::clamp(values[i], 0.0, y_max);
        const double bh = ph * v / y_max;
        const int x = left + gap / 2 + i * (bw + gap);
        s += fmt::format("<rect x=\"{}\" y=\"{:.2f}\" width=\"{}\" height=\"{:.2f}\" fill=\"{}\"/>\n", x,
                         top + ph - bh, bw, bh, kPalette[i % 10]);
        if (i < static_cast<int>(errors.size()) && errors[i] > 0.0) {
            const double lo = top + ph - ph * std::clamp(values[i] - errors[i], 0.0, y_max) / y_max;
            const double hi = top + ph - ph * std::clamp(values[i] + errors[i], 0.0, y_max) / y_max;
            s += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", x + bw / 2,
                             lo, x + bw / 2, hi);
        }
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-60 {} {})\">{}</text>\n",
                         x + bw / 2, top + ph + 14, x + bw / 2, top + ph + 14, escape(categories[i]));
    }
    return s + "</svg>\n";
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write " + path);
    out << content;
    if (!out) throw PipelineError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace stackplay::plot
