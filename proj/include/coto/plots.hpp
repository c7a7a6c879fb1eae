#ifndef COTO_PLOTS_HPP_
#define COTO_PLOTS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coto {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Deterministic SVG line plot. Each polyline carries its affine
// data-to-pixel transform (data-ox, data-sx, ...) so plotted points can be
// mapped back to the underlying values exactly.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)),
        x_label_(std::move(x_label)),
        y_label_(std::move(y_label)) {}

  void add_series(const Series& s) {
    if (s.x.empty()) return;
    series_.push_back(s);
    expand_bounds(s.x, s.y);
  }

  // min/max envelope across seeds, drawn as a translucent polygon.
  void add_band(const std::string& label, const std::vector<double>& x,
                const std::vector<double>& lo, const std::vector<double>& hi) {
    if (x.empty()) return;
    bands_.push_back({label, x, lo, hi});
    expand_bounds(x, lo);
    expand_bounds(x, hi);
  }

  void add_baseline(const std::string& label, double y) {
    baselines_.push_back({label, y});
    y_min_ = std::min(y_min_, y);
    y_max_ = std::max(y_max_, y);
  }

  std::string render() const {
    if (series_.empty()) throw std::runtime_error("SvgPlot: no data");
    double ymin = y_min_, ymax = y_max_;
    if (ymax - ymin < 1e-12) {
      ymin -= 1.0;
      ymax += 1.0;
    }
    double xmin = x_min_, xmax = x_max_;
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;

    // pixel = offset + scale * value
    double sx = (kWidth - kMarginL - kMarginR) / (xmax - xmin);
    double ox = kMarginL - sx * xmin;
    double sy = -(kHeight - kMarginT - kMarginB) / (ymax - ymin);
    double oy = (kHeight - kMarginB) - sy * ymin;

    std::ostringstream svg;
    svg.precision(17);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\">\n";
    svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\">"
        << title_ << "</text>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
        << "\" text-anchor=\"middle\">" << x_label_ << "</text>\n";
    svg << "<text x=\"14\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << kHeight / 2 << ")\">" << y_label_ << "</text>\n";
    // axes
    svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB
        << "\" x2=\"" << kWidth - kMarginR << "\" y2=\"" << kHeight - kMarginB
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\""
        << kMarginL << "\" y2=\"" << kHeight - kMarginB
        << "\" stroke=\"black\"/>\n";

    for (const auto& b : bands_) {
      svg << "<polygon class=\"band\" data-label=\"" << b.label
          << "\" fill=\"#8888ff\" fill-opacity=\"0.25\" stroke=\"none\" "
             "points=\"";
      for (std::size_t i = 0; i < b.x.size(); ++i)
        svg << ox + sx * b.x[i] << ',' << oy + sy * b.hi[i] << ' ';
      for (std::size_t i = b.x.size(); i-- > 0;)
        svg << ox + sx * b.x[i] << ',' << oy + sy * b.lo[i] << ' ';
      svg << "\"/>\n";
    }

    int color_index = 0;
    for (const auto& s : series_) {
      svg << "<polyline class=\"series\" data-label=\"" << s.label
          << "\" data-ox=\"" << ox << "\" data-sx=\"" << sx << "\" data-oy=\""
          << oy << "\" data-sy=\"" << sy << "\" fill=\"none\" stroke=\""
          << kColors[color_index % kNumColors] << "\" stroke-width=\"1.5\" "
          << "points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << ox + sx * s.x[i] << ',' << oy + sy * s.y[i] << ' ';
      svg << "\"/>\n";
      ++color_index;
    }

    for (const auto& b : baselines_) {
      double py = oy + sy * b.second;
      svg << "<line class=\"baseline\" data-label=\"" << b.first
          << "\" data-y=\"" << b.second << "\" x1=\"" << kMarginL
          << "\" y1=\"" << py << "\" x2=\"" << kWidth - kMarginR << "\" y2=\""
          << py << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
      svg << "<text x=\"" << kWidth - kMarginR - 4 << "\" y=\"" << py - 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << b.first
          << "</text>\n";
    }

    // legend
    int ly = kMarginT + 4;
    color_index = 0;
    for (const auto& s : series_) {
      svg << "<text x=\"" << kMarginL + 10 << "\" y=\"" << ly + 10
          << "\" font-size=\"12\" fill=\""
          << kColors[color_index % kNumColors] << "\">" << s.label
          << "</text>\n";
      ly += 16;
      ++color_index;
    }

    svg << "</svg>\n";
    return svg.str();
  }

 private:
  struct Band {
    std::string label;
    std::vector<double> x, lo, hi;
  };

  void expand_bounds(const std::vector<double>& x,
                     const std::vector<double>& y) {
    for (double v : x) {
      x_min_ = std::min(x_min_, v);
      x_max_ = std::max(x_max_, v);
    }
    for (double v : y) {
      y_min_ = std::min(y_min_, v);
      y_max_ = std::max(y_max_, v);
    }
  }

  static constexpr int kWidth = 800, kHeight = 500;
  static constexpr int kMarginL = 60, kMarginR = 20, kMarginT = 36,
                       kMarginB = 44;
  static constexpr int kNumColors = 5;
  static constexpr const char* kColors[kNumColors] = {
      "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  std::vector<Band> bands_;
  std::vector<std::pair<std::string, double>> baselines_;
  double x_min_ = std::numeric_limits<double>::infinity();
  double x_max_ = -std::numeric_limits<double>::infinity();
  double y_min_ = std::numeric_limits<double>::infinity();
  double y_max_ = -std::numeric_limits<double>::infinity();
};

}  // namespace coto

#endif  // COTO_PLOTS_HPP_
