#pragma once

#include <string>
#include <vector>

namespace stackplay::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Square heatmap with row/column labels; cell text shows the value.
std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels,
                        const std::string& title);

/// One colour per series, points only.
std::string scatter_svg(const std::vector<Series>& groups, const std::string& title);

std::string line_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label);

/// Vertical bars with optional symmetric error whiskers (empty = none).
std::string bar_svg(const std::vector<std::string>& categories, const std::vector<double>& values,
                    const std::vector<double>& errors, const std::string& title, double y_max = 1.0);

/// Writes bytes verbatim; throws PipelineError when the path is unwritable.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace stackplay::plot
