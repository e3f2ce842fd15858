// Deterministic SVG plotting: explanation panel stacks and removal-experiment
// curves. Pure text output with fixed number formatting so identical inputs
// produce identical bytes.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/eval.hpp"

namespace bxai::svg {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Panel {
  std::string title;
  std::vector<float> spectrum;         // length n_bins
  std::vector<double> importance;      // Grad-CAM heat, length n_bins (may be empty)
};

struct ExplainPlotConfig {
  double width = 900.0;
  double panel_height = 130.0;
  double panel_gap = 34.0;
  double margin_left = 55.0;
  double margin_right = 15.0;
  double margin_top = 28.0;
  double margin_bottom = 40.0;
};

// One panel per sample: spectrum polyline over a Grad-CAM heat strip, with
// optional green sub-band shading and dashed gridlines at the first three
// fault-order harmonics.
inline std::string explain_plot(const std::vector<Panel>& panels,
                                const OrderGrid& grid,
                                const std::optional<SubBands>& bands,
                                std::optional<double> fault_order,
                                const ExplainPlotConfig& cfg = {}) {
  const double plot_w = cfg.width - cfg.margin_left - cfg.margin_right;
  const double total_h = cfg.margin_top +
                         static_cast<double>(panels.size()) *
                             (cfg.panel_height + cfg.panel_gap) +
                         cfg.margin_bottom - cfg.panel_gap;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(cfg.width)
     << "\" height=\"" << num(total_h) << "\" viewBox=\"0 0 " << num(cfg.width)
     << " " << num(total_h) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const auto x_of = [&](double order) {
    return cfg.margin_left +
           plot_w * (order - grid.order_min) / (grid.order_max - grid.order_min);
  };

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& pan = panels[p];
    const double top = cfg.margin_top +
                       static_cast<double>(p) * (cfg.panel_height + cfg.panel_gap);
    const double bottom = top + cfg.panel_height;

    // Heat strip: one rect per importance cell, red with opacity proportional
    // to the normalized positive part.
    if (!pan.importance.empty()) {
      double mx = 0.0;
      for (double v : pan.importance) mx = std::max(mx, std::fabs(v));
      if (mx > 0.0) {
        // Coarsen to at most 256 cells to keep files small.
        const std::size_t n = pan.importance.size();
        const std::size_t cells = std::min<std::size_t>(n, 256);
        for (std::size_t c = 0; c < cells; ++c) {
          const std::size_t lo = c * n / cells, hi = (c + 1) * n / cells;
          double s = 0.0;
          for (std::size_t i = lo; i < hi; ++i) s += pan.importance[i];
          s /= static_cast<double>(hi - lo);
          const double a = std::max(0.0, s / mx);
          if (a < 0.004) continue;
          const double x0 = cfg.margin_left + plot_w * static_cast<double>(lo) /
                                                  static_cast<double>(n);
          const double x1 = cfg.margin_left + plot_w * static_cast<double>(hi) /
                                                  static_cast<double>(n);
          os << "<rect x=\"" << num(x0) << "\" y=\"" << num(top) << "\" width=\""
             << num(x1 - x0) << "\" height=\"" << num(cfg.panel_height)
             << "\" fill=\"#d62728\" opacity=\"" << num(0.55 * a) << "\"/>\n";
        }
      }
    }

    // Sub-band shading (green).
    if (bands.has_value()) {
      for (const auto& [lo, hi] : bands->bands) {
        if (!(hi > lo)) continue;
        const double x0 = x_of(std::max(lo, grid.order_min));
        const double x1 = x_of(std::min(hi, grid.order_max));
        if (x1 <= x0) continue;
        os << "<rect x=\"" << num(x0) << "\" y=\"" << num(top) << "\" width=\""
           << num(x1 - x0) << "\" height=\"" << num(cfg.panel_height)
           << "\" fill=\"#2ca02c\" opacity=\"0.18\"/>\n";
      }
    }

    // Fault-order gridlines at f_c, 2 f_c, 3 f_c.
    if (fault_order.has_value()) {
      for (int h = 1; h <= 3; ++h) {
        const double o = *fault_order * h;
        if (o <= grid.order_min || o >= grid.order_max) continue;
        const double x = x_of(o);
        os << "<line x1=\"" << num(x) << "\" y1=\"" << num(top) << "\" x2=\""
           << num(x) << "\" y2=\"" << num(bottom)
           << "\" stroke=\"#555555\" stroke-width=\"0.8\" "
              "stroke-dasharray=\"4 3\"/>\n";
      }
    }

    // Spectrum polyline, normalized to the panel's own max.
    float mx = 0.0f;
    for (float v : pan.spectrum) mx = std::max(mx, v);
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" "
          "points=\"";
    for (std::size_t i = 0; i < pan.spectrum.size(); ++i) {
      const double x = x_of(grid.bin_center(static_cast<std::uint32_t>(i)));
      const double frac = mx > 0.0f ? pan.spectrum[i] / mx : 0.0f;
      const double y = bottom - 0.92 * cfg.panel_height * frac;
      os << num(x) << "," << num(y) << " ";
    }
    os << "\"/>\n";

    // Panel frame + title.
    os << "<rect x=\"" << num(cfg.margin_left) << "\" y=\"" << num(top)
       << "\" width=\"" << num(plot_w) << "\" height=\"" << num(cfg.panel_height)
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << num(cfg.margin_left) << "\" y=\"" << num(top - 6.0)
       << "\" font-family=\"monospace\" font-size=\"12\">" << pan.title
       << "</text>\n";
  }

  // Shared x-axis labels under the last panel.
  const double axis_y = total_h - cfg.margin_bottom + 16.0;
  for (int o = 0; o <= static_cast<int>(grid.order_max); o += 5) {
    os << "<text x=\"" << num(x_of(o)) << "\" y=\"" << num(axis_y)
       << "\" font-family=\"monospace\" font-size=\"11\" "
          "text-anchor=\"middle\">"
       << o << "</text>\n";
  }
  os << "<text x=\"" << num(cfg.margin_left + plot_w / 2.0) << "\" y=\""
     << num(axis_y + 18.0)
     << "\" font-family=\"monospace\" font-size=\"12\" "
        "text-anchor=\"middle\">order (multiple of shaft frequency)</text>\n";
  os << "</svg>\n";
  return os.str();
}

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, mean, stddev;
};

// Mean curve with error bars per series; series are offset horizontally so
// overlapping error bars stay readable.
inline std::string curves_plot(const std::vector<Series>& series,
                               const std::string& y_label,
                               const std::string& x_label = "removal fraction") {
  const double width = 640.0, height = 420.0;
  const double ml = 70.0, mr = 20.0, mt = 30.0, mb = 55.0;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.mean[i] - s.stddev[i]);
      y_hi = std::max(y_hi, s.mean[i] + s.stddev[i]);
    }
  if (!(x_hi > x_lo)) { x_lo -= 0.5; x_hi += 0.5; }
  if (!(y_hi > y_lo)) { y_lo -= 0.5; y_hi += 0.5; }
  const double y_pad = 0.08 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;
  const double x_pad = 0.06 * (x_hi - x_lo);
  x_lo -= x_pad;
  x_hi += x_pad;

  const auto px = [&](double v) { return ml + pw * (v - x_lo) / (x_hi - x_lo); };
  const auto py = [&](double v) { return mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
     << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width) << " "
     << num(height) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw)
     << "\" height=\"" << num(ph)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // Ticks: 5 per axis.
  for (int t = 0; t <= 5; ++t) {
    const double xv = x_lo + (x_hi - x_lo) * t / 5.0;
    const double yv = y_lo + (y_hi - y_lo) * t / 5.0;
    os << "<line x1=\"" << num(px(xv)) << "\" y1=\"" << num(mt + ph) << "\" x2=\""
       << num(px(xv)) << "\" y2=\"" << num(mt + ph + 5.0)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(mt + ph + 18.0)
       << "\" font-family=\"monospace\" font-size=\"11\" "
          "text-anchor=\"middle\">"
       << num(xv) << "</text>\n";
    os << "<line x1=\"" << num(ml - 5.0) << "\" y1=\"" << num(py(yv)) << "\" x2=\""
       << num(ml) << "\" y2=\"" << num(py(yv)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(ml - 8.0) << "\" y=\"" << num(py(yv) + 4.0)
       << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">"
       << num(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(ml + pw / 2.0) << "\" y=\"" << num(height - 12.0)
     << "\" font-family=\"monospace\" font-size=\"13\" "
        "text-anchor=\"middle\">"
     << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(mt + ph / 2.0)
     << "\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\" "
        "transform=\"rotate(-90 16 "
     << num(mt + ph / 2.0) << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    // Horizontal offset so error bars of different series never coincide.
    const double dx = (static_cast<double>(si) -
                       static_cast<double>(series.size() - 1) / 2.0) *
                      0.006 * (x_hi - x_lo);
    os << "<polyline fill=\"none\" stroke=\"" << s.color
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << num(px(s.x[i]) + dx) << "," << num(py(s.mean[i])) << " ";
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double x = px(s.x[i]) + dx;
      os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(py(s.mean[i]))
         << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
      if (s.stddev[i] > 0.0) {
        const double y0 = py(s.mean[i] - s.stddev[i]);
        const double y1 = py(s.mean[i] + s.stddev[i]);
        os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0) << "\" x2=\""
           << num(x) << "\" y2=\"" << num(y1) << "\" stroke=\"" << s.color
           << "\" stroke-width=\"1\"/>\n";
        for (double yy : {y0, y1})
          os << "<line x1=\"" << num(x - 4.0) << "\" y1=\"" << num(yy)
             << "\" x2=\"" << num(x + 4.0) << "\" y2=\"" << num(yy)
             << "\" stroke=\"" << s.color << "\" stroke-width=\"1\"/>\n";
      }
    }
    // Legend entry.
    const double ly = mt + 16.0 + 18.0 * static_cast<double>(si);
    os << "<line x1=\"" << num(ml + 12.0) << "\" y1=\"" << num(ly) << "\" x2=\""
       << num(ml + 36.0) << "\" y2=\"" << num(ly) << "\" stroke=\"" << s.color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(ml + 42.0) << "\" y=\"" << num(ly + 4.0)
       << "\" font-family=\"monospace\" font-size=\"12\">" << s.label
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace bxai::svg
