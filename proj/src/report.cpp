#include "pointsentinel/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace ps::report {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Table Table::read_csv(const std::string& path) {
  std::ifstream in(path);
  PS_IO_CHECK(in.good(), "cannot open csv '", path, "'");
  Table t;
  std::string line;
  PS_CHECK(std::getline(in, line), "csv '", path, "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.columns = split_line(line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row = split_line(line);
    PS_CHECK(row.size() == t.columns.size(), "csv '", path, "' line ", line_no, ": expected ",
             t.columns.size(), " fields, got ", row.size());
    t.rows.push_back(std::move(row));
  }
  return t;
}

void Table::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write csv '", path, "'");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out << ',';
    out << columns[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    PS_CHECK(row.size() == columns.size(), "csv row has ", row.size(), " fields, header has ",
             columns.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << "\n";
  }
  PS_IO_CHECK(out.good(), "failed writing csv '", path, "'");
}

int Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Table::require_col(const std::string& name) const {
  const int i = col(name);
  PS_CHECK(i >= 0, "csv table is missing column '", name, "'");
  return i;
}

void Table::add_row(std::vector<std::string> row) {
  PS_CHECK(row.size() == columns.size(), "csv row has ", row.size(), " fields, header has ",
           columns.size());
  rows.push_back(std::move(row));
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// --- SVG ------------------------------------------------------------------------

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kMarginL = 64;
constexpr int kMarginR = 160;  // room for the legend
constexpr int kMarginT = 40;
constexpr int kMarginB = 56;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double map_x(double x, double x_max) {
  return kMarginL + (x / x_max) * (kWidth - kMarginL - kMarginR);
}

double map_y(double y) {
  return kHeight - kMarginB - y * (kHeight - kMarginT - kMarginB);
}

}  // namespace

void write_curve_svg(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label, double x_max,
                     const std::vector<PlotSeries>& series) {
  PS_CHECK(x_max > 0.0, "svg: x_max must be positive");
  std::ofstream out(path, std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write svg '", path, "'");

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << " " << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  out << "  <rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";

  // Axes and ticks.
  const double x0 = map_x(0.0, x_max), y0 = map_y(0.0), y1 = map_y(1.0);
  const double x1 = map_x(x_max, x_max);
  out << "  <line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_max * i / 4.0;
    const double px = map_x(fx, x_max);
    out << "  <line x1=\"" << px << "\" y1=\"" << y0 << "\" x2=\"" << px << "\" y2=\"" << y0 + 5
        << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << px << "\" y=\"" << y0 + 22 << "\" text-anchor=\"middle\">"
        << fmt_double(fx) << "</text>\n";
    const double fy = i / 4.0;
    const double py = map_y(fy);
    out << "  <line x1=\"" << x0 - 5 << "\" y1=\"" << py << "\" x2=\"" << x0 << "\" y2=\"" << py
        << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << x0 - 10 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
        << fmt_double(fy) << "</text>\n";
  }
  out << "  <text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  out << "  <text x=\"18\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (y0 + y1) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[si].points.size(); ++i) {
      if (i) out << ' ';
      const auto [px, py] = series[si].points[i];
      out << map_x(px, x_max) << ',' << map_y(std::clamp(py, 0.0, 1.0));
    }
    out << "\"/>\n";
    const double ly = kMarginT + 18.0 * static_cast<double>(si);
    out << "  <line x1=\"" << kWidth - kMarginR + 12 << "\" y1=\"" << ly + 6 << "\" x2=\""
        << kWidth - kMarginR + 36 << "\" y2=\"" << ly + 6 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "  <text x=\"" << kWidth - kMarginR + 42 << "\" y=\"" << ly + 10 << "\">"
        << xml_escape(series[si].label) << "</text>\n";
  }
  out << "</svg>\n";
  PS_IO_CHECK(out.good(), "failed writing svg '", path, "'");
}

}  // namespace ps::report
