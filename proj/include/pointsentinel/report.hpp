#ifndef POINTSENTINEL_REPORT_HPP
#define POINTSENTINEL_REPORT_HPP

#include <string>
#include <utility>
#include <vector>

#include "pointsentinel/common.hpp"

namespace ps::report {

// Minimal CSV table (no quoting; fields must not contain separators).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  static Table read_csv(const std::string& path);
  void write_csv(const std::string& path) const;

  int col(const std::string& name) const;          // -1 when absent
  int require_col(const std::string& name) const;  // throws naming the column
  void add_row(std::vector<std::string> row);
};

std::string fmt_double(double v);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y) with y in [0,1]
};

// Hand-emitted SVG: axes, ticks, one polyline per series, legend. No plotting
// dependency.
void write_curve_svg(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label, double x_max,
                     const std::vector<PlotSeries>& series);

}  // namespace ps::report

#endif  // POINTSENTINEL_REPORT_HPP
