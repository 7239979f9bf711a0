#include "bapolab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "bapolab/error.hpp"

namespace bapolab {

namespace {

constexpr int kWidth = 880;
constexpr int kHeight = 520;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 160;
constexpr int kMarginTop = 24;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string render_line_chart(const std::vector<ChartSeries>& series, const std::string& x_label,
                              const std::string& y_label) {
  if (series.empty()) throw DomainError("render_line_chart: no series");

  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw DomainError(msg("series '", s.label, "': x/y size mismatch"));
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (!any) throw DomainError("render_line_chart: no finite data points");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  const auto sy = [&](double y) { return kMarginTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // axes
  os << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
     << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
     << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / kTicks;
    const double fy = ymin + (ymax - ymin) * i / kTicks;
    const double px = sx(fx);
    const double py = sy(fy);
    os << "<line x1=\"" << coord(px) << "\" y1=\"" << coord(kMarginTop + plot_h) << "\" x2=\""
       << coord(px) << "\" y2=\"" << coord(kMarginTop + plot_h + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << coord(px) << "\" y=\"" << coord(kMarginTop + plot_h + 20)
       << "\" font-size=\"11\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
    os << "<line x1=\"" << coord(kMarginLeft - 5) << "\" y1=\"" << coord(py) << "\" x2=\""
       << coord(static_cast<double>(kMarginLeft)) << "\" y2=\"" << coord(py)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << coord(kMarginLeft - 8) << "\" y=\"" << coord(py + 4)
       << "\" font-size=\"11\" text-anchor=\"end\">" << num(fy) << "</text>\n";
  }

  os << "<text x=\"" << coord(kMarginLeft + plot_w / 2) << "\" y=\"" << kHeight - 10
     << "\" font-size=\"13\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << coord(kMarginTop + plot_h / 2)
     << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << coord(kMarginTop + plot_h / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
    std::ostringstream points;
    bool open = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (open) points << ' ';
      points << coord(sx(s.x[i])) << ',' << coord(sy(s.y[i]));
      open = true;
    }
    if (open)
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
         << points.str() << "\"/>\n";
    const double ly = kMarginTop + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << kMarginLeft + plot_w + 12 << "\" y1=\"" << coord(ly - 4) << "\" x2=\""
       << kMarginLeft + plot_w + 32 << "\" y2=\"" << coord(ly - 4) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kMarginLeft + plot_w + 38 << "\" y=\"" << coord(ly)
       << "\" font-size=\"11\">" << escape(s.label) << "</text>\n";
  }

  os << "</svg>\n";
  return os.str();
}

}  // namespace bapolab
