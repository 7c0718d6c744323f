#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stacknov {

// Wilson score interval for a binomial proportion.
struct WilsonInterval {
  double lo = 0.0, hi = 1.0;
};

inline WilsonInterval wilson_interval(int successes, int trials,
                                      double z = 1.959963984540054) {
  if (trials <= 0 || successes < 0 || successes > trials)
    throw std::invalid_argument("wilson_interval: bad counts");
  double n = trials;
  double p = successes / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double centre = (p + z2 / (2 * n)) / denom;
  double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << csv_escape(header[i]);
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << csv_escape(row[i]);
    out << "\n";
  }
}

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Fixed-width text rendering of a labeled square matrix (e.g. the CCA table).
inline std::string format_table(const Eigen::MatrixXd& m,
                                const std::vector<std::string>& labels,
                                int width = 12, int precision = 3) {
  if (m.rows() != m.cols() ||
      m.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("format_table: shape/label mismatch");
  std::ostringstream os;
  os << std::left << std::setw(width) << "";
  for (const auto& l : labels) os << std::right << std::setw(width) << l;
  os << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << std::left << std::setw(width) << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      os << std::right << std::setw(width) << std::fixed
         << std::setprecision(precision) << m(i, j);
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG plots, drawn directly so figures need no external tooling. Every plot
// has a CSV sibling with the underlying numbers.

namespace svg {

inline std::string header(int w, int h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  return os.str();
}

inline std::string text(double x, double y, const std::string& s,
                        int size = 12, const std::string& anchor = "start") {
  std::ostringstream os;
  os << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
     << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s
     << "</text>\n";
  return os.str();
}

inline std::string line(double x1, double y1, double x2, double y2,
                        const std::string& color = "black",
                        double width = 1.0) {
  std::ostringstream os;
  os << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2
     << "\" y2=\"" << y2 << "\" stroke=\"" << color << "\" stroke-width=\""
     << width << "\"/>\n";
  return os.str();
}

inline std::string rect(double x, double y, double w, double h,
                        const std::string& fill,
                        const std::string& stroke = "none") {
  std::ostringstream os;
  os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w
     << "\" height=\"" << h << "\" fill=\"" << fill << "\" stroke=\"" << stroke
     << "\"/>\n";
  return os.str();
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                             "#d62728", "#9467bd", "#8c564b"};
  return p;
}

}  // namespace svg

struct Series {
  std::string label;
  std::vector<double> values;   // y at x = 0, 1, 2, ...
};

// Multi-series line chart with linear axes and simple tick labels.
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<Series>& series) {
  if (series.empty())
    throw std::invalid_argument("write_line_chart: no series");
  const int W = 720, H = 420, L = 70, R = 160, T = 40, B = 50;
  double ymin = 0, ymax = 1, xmax = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      double v = s.values[i];
      if (first) { ymin = ymax = v; first = false; }
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
      xmax = std::max(xmax, static_cast<double>(i));
    }
  if (ymax == ymin) { ymax += 1; ymin -= 1; }
  if (xmax == 0) xmax = 1;
  auto px = [&](double x) { return L + x / xmax * (W - L - R); };
  auto py = [&](double y) {
    return H - B - (y - ymin) / (ymax - ymin) * (H - T - B);
  };

  std::ostringstream os;
  os << svg::header(W, H);
  os << svg::text(W / 2.0, 22, title, 15, "middle");
  os << svg::line(L, T, L, H - B) << svg::line(L, H - B, W - R, H - B);
  for (int i = 0; i <= 4; ++i) {
    double y = ymin + (ymax - ymin) * i / 4.0;
    os << svg::line(L - 4, py(y), L, py(y));
    os << svg::text(L - 8, py(y) + 4, fmt(y, 3), 10, "end");
    double x = xmax * i / 4.0;
    os << svg::line(px(x), H - B, px(x), H - B + 4);
    os << svg::text(px(x), H - B + 16, fmt(x, 4), 10, "middle");
  }
  os << svg::text(W / 2.0, H - 8, x_label, 12, "middle");
  os << svg::text(16, T - 10, y_label, 12, "start");
  for (std::size_t s = 0; s < series.size(); ++s) {
    const std::string& color = svg::palette()[s % svg::palette().size()];
    const auto& v = series[s].values;
    std::ostringstream pts;
    for (std::size_t i = 0; i < v.size(); ++i)
      pts << px(static_cast<double>(i)) << "," << py(v[i]) << " ";
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    os << svg::rect(W - R + 10, T + 18.0 * s, 12, 12, color);
    os << svg::text(W - R + 28, T + 18.0 * s + 10, series[s].label, 11);
  }
  os << "</svg>\n";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_line_chart: cannot open " + path);
  f << os.str();
}

struct Bar {
  std::string label;
  double value = 0.0;
  double lo = 0.0, hi = 0.0;   // confidence interval
  int group = 0;               // color group
};

// Bar chart on a [0, 1] axis with error bars (accuracy figures).
inline void write_bar_chart(const std::string& path, const std::string& title,
                            const std::vector<Bar>& bars,
                            const std::vector<std::string>& group_labels = {}) {
  if (bars.empty()) throw std::invalid_argument("write_bar_chart: no bars");
  const int L = 60, R = 140, T = 40, B = 90, H = 360;
  const double bw = 34, gap = 14;
  const int W =
      L + R + static_cast<int>(bars.size() * (bw + gap) + gap);
  auto py = [&](double y) { return H - B - y * (H - T - B); };

  std::ostringstream os;
  os << svg::header(W, H);
  os << svg::text(W / 2.0, 22, title, 15, "middle");
  os << svg::line(L, T, L, H - B) << svg::line(L, H - B, W - R, H - B);
  for (int i = 0; i <= 4; ++i) {
    double y = i / 4.0;
    os << svg::line(L - 4, py(y), W - R, py(y), "#dddddd");
    os << svg::text(L - 8, py(y) + 4, fmt(y, 3), 10, "end");
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    double x = L + gap + i * (bw + gap);
    const std::string& color =
        svg::palette()[static_cast<std::size_t>(bars[i].group) %
                       svg::palette().size()];
    os << svg::rect(x, py(bars[i].value), bw, py(0) - py(bars[i].value), color);
    os << svg::line(x + bw / 2, py(bars[i].lo), x + bw / 2, py(bars[i].hi));
    os << svg::line(x + bw / 2 - 5, py(bars[i].lo), x + bw / 2 + 5,
                    py(bars[i].lo));
    os << svg::line(x + bw / 2 - 5, py(bars[i].hi), x + bw / 2 + 5,
                    py(bars[i].hi));
    os << "<text x=\"" << x + bw / 2 << "\" y=\"" << H - B + 12
       << "\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"end\" "
          "transform=\"rotate(-45 "
       << x + bw / 2 << " " << H - B + 12 << ")\">" << bars[i].label
       << "</text>\n";
  }
  for (std::size_t g = 0; g < group_labels.size(); ++g) {
    const std::string& color = svg::palette()[g % svg::palette().size()];
    os << svg::rect(W - R + 10, T + 18.0 * g, 12, 12, color);
    os << svg::text(W - R + 28, T + 18.0 * g + 10, group_labels[g], 11);
  }
  os << "</svg>\n";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_bar_chart: cannot open " + path);
  f << os.str();
}

// Heatmap with per-cell numeric annotation (confusion matrices, CCA tables).
inline void write_heatmap(const std::string& path, const std::string& title,
                          const Eigen::MatrixXd& m,
                          const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels,
                          int precision = 2) {
  if (m.rows() != static_cast<Eigen::Index>(row_labels.size()) ||
      m.cols() != static_cast<Eigen::Index>(col_labels.size()))
    throw std::invalid_argument("write_heatmap: label shape mismatch");
  const int cell = 64, L = 110, T = 70;
  const int W = L + cell * static_cast<int>(m.cols()) + 20;
  const int H = T + cell * static_cast<int>(m.rows()) + 20;
  double lo = m.minCoeff(), hi = m.maxCoeff();
  if (hi == lo) hi = lo + 1;

  std::ostringstream os;
  os << svg::header(W, H);
  os << svg::text(W / 2.0, 24, title, 15, "middle");
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    os << svg::text(L + cell * j + cell / 2.0, T - 10,
                    col_labels[static_cast<std::size_t>(j)], 11, "middle");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << svg::text(L - 8, T + cell * i + cell / 2.0 + 4,
                    row_labels[static_cast<std::size_t>(i)], 11, "end");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double t = (m(i, j) - lo) / (hi - lo);
      int r = static_cast<int>(255 * (1 - t));
      int g = static_cast<int>(255 * (1 - 0.6 * t));
      std::ostringstream color;
      color << "rgb(" << r << "," << g << ",255)";
      os << svg::rect(L + cell * j, T + cell * i, cell, cell, color.str(),
                      "#999999");
      os << svg::text(L + cell * j + cell / 2.0, T + cell * i + cell / 2.0 + 4,
                      fmt(m(i, j), precision + 1), 11, "middle");
    }
  }
  os << "</svg>\n";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_heatmap: cannot open " + path);
  f << os.str();
}

}  // namespace stacknov
