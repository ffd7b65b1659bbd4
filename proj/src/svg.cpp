#include "alam/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "alam/common.hpp"

namespace alam {

namespace {

constexpr double kW = 640, kH = 440;
constexpr double kL = 70, kR = 160, kT = 40, kB = 50;  // margins (legend on the right)
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

}  // namespace

void write_line_plot(const LinePlotSpec& spec, const std::string& path) {
  require(!spec.series.empty(), "write_line_plot: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : spec.series) {
    require(s.x.size() == s.y.size() && !s.x.empty(), "write_line_plot: malformed series");
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      double y = s.y[i];
      if (spec.log_y) y = std::max(y, 1e-12);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (spec.log_y) {
    ymin = std::pow(10.0, std::floor(std::log10(ymin)));
    ymax = std::pow(10.0, std::ceil(std::log10(ymax)));
    if (ymax <= ymin) ymax = ymin * 10;
  } else {
    const double pad = 0.05 * (ymax - ymin + 1e-12);
    ymin -= pad;
    ymax += pad;
    if (ymax == ymin) ymax = ymin + 1;
  }

  auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * (kW - kL - kR); };
  auto py = [&](double y) {
    if (spec.log_y) y = std::log10(std::max(y, 1e-12));
    const double lo = spec.log_y ? std::log10(ymin) : ymin;
    const double hi = spec.log_y ? std::log10(ymax) : ymax;
    return kH - kB - (y - lo) / (hi - lo) * (kH - kT - kB);
  };

  std::ofstream f(path);
  require(f.good(), "write_line_plot: cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  if (spec.shade && spec.shade_from_x > xmin) {
    f << "<rect x='" << num(px(spec.shade_from_x)) << "' y='" << kT << "' width='"
      << num(px(xmax) - px(spec.shade_from_x)) << "' height='" << num(kH - kT - kB)
      << "' fill='#dddddd' opacity='0.5'/>\n";
  }
  f << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15'>"
    << esc(spec.title) << "</text>\n";
  // axes
  f << "<line x1='" << kL << "' y1='" << kH - kB << "' x2='" << kW - kR << "' y2='" << kH - kB
    << "' stroke='black'/>\n";
  f << "<line x1='" << kL << "' y1='" << kT << "' x2='" << kL << "' y2='" << kH - kB
    << "' stroke='black'/>\n";
  f << "<text x='" << (kL + kW - kR) / 2 << "' y='" << kH - 12
    << "' text-anchor='middle' font-size='12'>" << esc(spec.xlabel) << "</text>\n";
  f << "<text x='18' y='" << (kT + kH - kB) / 2
    << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 "
    << (kT + kH - kB) / 2 << ")'>" << esc(spec.ylabel) << "</text>\n";

  // y ticks
  if (spec.log_y) {
    for (double d = std::log10(ymin); d <= std::log10(ymax) + 1e-9; d += 1.0) {
      const double v = std::pow(10.0, d);
      f << "<line x1='" << kL - 4 << "' y1='" << num(py(v)) << "' x2='" << kL << "' y2='"
        << num(py(v)) << "' stroke='black'/>\n";
      f << "<text x='" << kL - 8 << "' y='" << num(py(v) + 4)
        << "' text-anchor='end' font-size='10'>1e" << num(d) << "</text>\n";
    }
  } else {
    for (int i = 0; i <= 4; ++i) {
      const double v = ymin + (ymax - ymin) * i / 4;
      f << "<line x1='" << kL - 4 << "' y1='" << num(py(v)) << "' x2='" << kL << "' y2='"
        << num(py(v)) << "' stroke='black'/>\n";
      f << "<text x='" << kL - 8 << "' y='" << num(py(v) + 4)
        << "' text-anchor='end' font-size='10'>" << num(v) << "</text>\n";
    }
  }
  // x ticks at the union of sample points of the first series
  for (double x : spec.series[0].x) {
    f << "<line x1='" << num(px(x)) << "' y1='" << kH - kB << "' x2='" << num(px(x)) << "' y2='"
      << kH - kB + 4 << "' stroke='black'/>\n";
    f << "<text x='" << num(px(x)) << "' y='" << kH - kB + 16
      << "' text-anchor='middle' font-size='10'>" << num(x) << "</text>\n";
  }

  for (size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = kColors[si % 6];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << num(px(s.x[i])) << "," << num(py(spec.log_y ? std::max(s.y[i], 1e-12) : s.y[i])) << " ";
    f << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << "<circle cx='" << num(px(s.x[i])) << "' cy='"
        << num(py(spec.log_y ? std::max(s.y[i], 1e-12) : s.y[i])) << "' r='3' fill='" << color
        << "'/>\n";
    const double ly = kT + 16 + 18 * static_cast<double>(si);
    f << "<line x1='" << kW - kR + 10 << "' y1='" << num(ly) << "' x2='" << kW - kR + 30
      << "' y2='" << num(ly) << "' stroke='" << color << "' stroke-width='2'/>\n";
    f << "<text x='" << kW - kR + 36 << "' y='" << num(ly + 4) << "' font-size='11'>"
      << esc(s.label) << "</text>\n";
  }
  f << "</svg>\n";
}

void write_bar_chart(const BarChartSpec& spec, const std::string& path) {
  require(!spec.bars.empty(), "write_bar_chart: no bars");
  double ymax = 0.0;
  for (const auto& [_, v] : spec.bars) ymax = std::max(ymax, v);
  if (!spec.error_bars.empty())
    for (const auto& [lo, hi] : spec.error_bars) ymax = std::max(ymax, hi);
  if (ymax <= 0) ymax = 1.0;
  ymax *= 1.1;

  const double n = static_cast<double>(spec.bars.size());
  const double band = (kW - kL - 40) / n;
  auto py = [&](double y) { return kH - kB - y / ymax * (kH - kT - kB); };

  std::ofstream f(path);
  require(f.good(), "write_bar_chart: cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15'>"
    << esc(spec.title) << "</text>\n";
  f << "<line x1='" << kL << "' y1='" << kH - kB << "' x2='" << kW - 40 << "' y2='" << kH - kB
    << "' stroke='black'/>\n";
  f << "<line x1='" << kL << "' y1='" << kT << "' x2='" << kL << "' y2='" << kH - kB
    << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymax * i / 4;
    f << "<line x1='" << kL - 4 << "' y1='" << num(py(v)) << "' x2='" << kL << "' y2='"
      << num(py(v)) << "' stroke='black'/>\n";
    f << "<text x='" << kL - 8 << "' y='" << num(py(v) + 4)
      << "' text-anchor='end' font-size='10'>" << num(v) << "</text>\n";
  }
  f << "<text x='18' y='" << (kT + kH - kB) / 2
    << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 "
    << (kT + kH - kB) / 2 << ")'>" << esc(spec.ylabel) << "</text>\n";
  for (size_t i = 0; i < spec.bars.size(); ++i) {
    const double x0 = kL + band * static_cast<double>(i) + band * 0.15;
    const double w = band * 0.7;
    const double v = spec.bars[i].second;
    f << "<rect x='" << num(x0) << "' y='" << num(py(v)) << "' width='" << num(w) << "' height='"
      << num(kH - kB - py(v)) << "' fill='" << kColors[i % 6] << "'/>\n";
    f << "<text x='" << num(x0 + w / 2) << "' y='" << kH - kB + 16
      << "' text-anchor='middle' font-size='11'>" << esc(spec.bars[i].first) << "</text>\n";
    f << "<text x='" << num(x0 + w / 2) << "' y='" << num(py(v) - 6)
      << "' text-anchor='middle' font-size='10'>" << num(v) << "</text>\n";
    if (i < spec.error_bars.size()) {
      const auto& [lo, hi] = spec.error_bars[i];
      const double cx = x0 + w / 2;
      f << "<line x1='" << num(cx) << "' y1='" << num(py(lo)) << "' x2='" << num(cx) << "' y2='"
        << num(py(hi)) << "' stroke='black'/>\n";
    }
  }
  f << "</svg>\n";
}

}  // namespace alam

