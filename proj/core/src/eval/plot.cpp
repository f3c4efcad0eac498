#include "prada/eval/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prada/util/error.hpp"
#include "svg.hpp"

namespace prada::eval {

using svg::escape;
using svg::px;

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ConfigError("smoothing window must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t k = first; k <= i; ++k) acc += values[k];
    out[i] = acc / static_cast<double>(i + 1 - first);
  }
  return out;
}

namespace {

// 1, 2 or 5 times a power of ten, giving about `target` intervals.
double nice_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

std::string tick(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
  static const char* kColors[] = {"#9ecae1", "#08519c", "#fdae6b", "#a63603", "#74c476", "#006d2c"};
  const double w = 720, h = 420, left = 70, right = 170, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ContractError("line chart: x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]), xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]), ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  ymin = std::min(ymin, 0.0);
  const auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  const auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w) << "\" height=\"" << px(h)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  os << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(pw) << "\" height=\"" << px(ph)
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const double xs = nice_step(xmax - xmin, 6), ys = nice_step(ymax - ymin, 5);
  for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9 * xs; t += xs) {
    os << "<line x1=\"" << px(sx(t)) << "\" y1=\"" << px(top + ph) << "\" x2=\"" << px(sx(t)) << "\" y2=\""
       << px(top + ph + 5) << "\" stroke=\"#444\"/>";
    os << "<text x=\"" << px(sx(t)) << "\" y=\"" << px(top + ph + 18) << "\" text-anchor=\"middle\">" << tick(t)
       << "</text>\n";
  }
  for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9 * ys; t += ys) {
    os << "<line x1=\"" << px(left - 5) << "\" y1=\"" << px(sy(t)) << "\" x2=\"" << px(left + pw) << "\" y2=\""
       << px(sy(t)) << "\" stroke=\"#ddd\"/>";
    os << "<text x=\"" << px(left - 8) << "\" y=\"" << px(sy(t) + 4) << "\" text-anchor=\"end\">" << tick(t)
       << "</text>\n";
  }
  os << "<text x=\"" << px(left + pw / 2) << "\" y=\"" << px(h - 10) << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << px(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << px(top + ph / 2) << ")\">" << escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      os << px(sx(s.x[i])) << "," << px(sy(s.y[i])) << " ";
    }
    os << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << px(left + pw + 12) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(left + pw + 32)
       << "\" y2=\"" << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    os << "<text x=\"" << px(left + pw + 38) << "\" y=\"" << px(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string convergence_svg(const std::vector<training::MetricRow>& log, std::size_t window, const std::string& title) {
  Series ly{"L_y", {}, {}}, ld{"L_d", {}, {}};
  for (const auto& r : log) {
    ly.x.push_back(static_cast<double>(r.step));
    ly.y.push_back(r.l_y);
    ld.x.push_back(static_cast<double>(r.step));
    ld.y.push_back(0.5 * (r.l_d_src + r.l_d_tgt));
  }
  Series ly_s{"L_y (smoothed)", ly.x, smooth(ly.y, window)};
  Series ld_s{"L_d (smoothed)", ld.x, smooth(ld.y, window)};
  return line_chart_svg({ly, ly_s, ld, ld_s}, title, "step", "loss");
}

}  // namespace prada::eval
