#include "io/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace entnas {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                          "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896"};
constexpr int kPaletteSize = 14;

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 64, kRight = kWidth - 168, kTop = 44, kBottom = kHeight - 52;

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<int>& x, const std::vector<ChartSeries>& series) {
  if (x.empty()) fail(ErrorKind::Contract, "chart: empty x axis");
  for (const ChartSeries& s : series)
    if (s.y.size() != x.size())
      fail(ErrorKind::Contract, "chart: series '" + s.label + "' length does not match the x axis");

  double lo = 0, hi = 1;
  bool first = true;
  for (const ChartSeries& s : series)
    for (real v : s.y) {
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
      }
    }
  if (hi - lo < 1e-12) {
    lo -= 1;
    hi += 1;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double x_lo = x.front(), x_hi = x.back();
  const double x_span = std::max(1.0, x_hi - x_lo);
  auto px = [&](double v) { return kLeft + (v - x_lo) / x_span * (kRight - kLeft); };
  auto py = [&](double v) { return kBottom - (v - lo) / (hi - lo) * (kBottom - kTop); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth, "%.0f") + "\" height=\"" +
         fmt(kHeight, "%.0f") + "\" viewBox=\"0 0 " + fmt(kWidth, "%.0f") + " " + fmt(kHeight, "%.0f") + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape(title) + "</text>\n";

  // gridlines and y ticks
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4;
    const double yy = py(v);
    svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(yy) + "\" x2=\"" + fmt(kRight) + "\" y2=\"" + fmt(yy) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(yy + 4) + "\" text-anchor=\"end\" "
           "font-family=\"sans-serif\" font-size=\"11\">" + fmt(v, "%.4g") + "</text>\n";
  }
  // x ticks: at most 10, always including the first and last epoch
  const std::size_t stride = std::max<std::size_t>(1, (x.size() + 9) / 10);
  for (std::size_t i = 0; i < x.size(); i += stride) {
    const double xx = px(x[i]);
    svg += "<line x1=\"" + fmt(xx) + "\" y1=\"" + fmt(kBottom) + "\" x2=\"" + fmt(xx) + "\" y2=\"" +
           fmt(kBottom + 5) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(xx) + "\" y=\"" + fmt(kBottom + 18) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(x[i]) + "</text>\n";
  }
  if ((x.size() - 1) % stride != 0) {
    const double xx = px(x.back());
    svg += "<text x=\"" + fmt(xx) + "\" y=\"" + fmt(kBottom + 18) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(x.back()) + "</text>\n";
  }

  // axes
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" + fmt(kBottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kBottom) + "\" x2=\"" + fmt(kRight) + "\" y2=\"" +
         fmt(kBottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"" + fmt(kHeight - 14) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">" + escape(x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt((kTop + kBottom) / 2) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 " + fmt((kTop + kBottom) / 2) +
         ")\">" + escape(y_label) + "</text>\n";

  // series
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    std::string points;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!points.empty()) points += " ";
      points += fmt(px(x[i])) + "," + fmt(py(series[s].y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
           "\"/>\n";
    const double ly = kTop + 16 * static_cast<double>(s);
    svg += "<line x1=\"" + fmt(kRight + 10) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(kRight + 30) + "\" y2=\"" +
           fmt(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(kRight + 34) + "\" y=\"" + fmt(ly + 4) + "\" font-family=\"sans-serif\" "
           "font-size=\"10\">" + escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace entnas
