#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prada/training/trainer.hpp"

namespace prada::eval {

// Trailing moving average: entry i is the mean of values[max(0, i-w+1) .. i].
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal line chart with axes, ticks and a legend.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

// L_y and L_d (raw and window-smoothed) against step, from a metric log.
std::string convergence_svg(const std::vector<training::MetricRow>& log, std::size_t window = 50,
                            const std::string& title = "Convergence");

}  // namespace prada::eval
