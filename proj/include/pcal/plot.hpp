#ifndef PCAL_PLOT_HPP
#define PCAL_PLOT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace pcal {

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Panel {
  double x0, y0, w, h;  // plotting area in SVG units
  double xmin, xmax, ymin, ymax;
  bool log_y;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const {
    const double t = log_y ? (std::log10(y) - ymin) / (ymax - ymin) : (y - ymin) / (ymax - ymin);
    return y0 + h - t * h;
  }
};

inline const char* series_colour(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline void draw_axes(std::string& s, const Panel& p, const std::vector<double>& xticks, const std::string& xlabel,
                      const std::string& ylabel, const std::string& title) {
  s += "<rect x=\"" + fixed(p.x0) + "\" y=\"" + fixed(p.y0) + "\" width=\"" + fixed(p.w) + "\" height=\"" + fixed(p.h) +
       "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (double x : xticks) {
    const double X = p.px(x);
    s += "<line x1=\"" + fixed(X) + "\" y1=\"" + fixed(p.y0 + p.h) + "\" x2=\"" + fixed(X) + "\" y2=\"" +
         fixed(p.y0 + p.h + 5) + "\" stroke=\"#000\"/>\n";
    s += "<text x=\"" + fixed(X) + "\" y=\"" + fixed(p.y0 + p.h + 18) + "\" text-anchor=\"middle\">" + fixed(x) +
         "</text>\n";
  }
  if (p.log_y) {
    for (int e = static_cast<int>(p.ymin); e <= static_cast<int>(p.ymax); ++e) {
      const double Y = p.py(std::pow(10.0, e));
      s += "<line x1=\"" + fixed(p.x0 - 5) + "\" y1=\"" + fixed(Y) + "\" x2=\"" + fixed(p.x0 + p.w) + "\" y2=\"" +
           fixed(Y) + "\" stroke=\"#ddd\"/>\n";
      s += "<text x=\"" + fixed(p.x0 - 8) + "\" y=\"" + fixed(Y + 4) + "\" text-anchor=\"end\">1e" +
           std::to_string(e) + "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double y = p.ymin + (p.ymax - p.ymin) * k / 4.0;
      const double Y = p.py(y);
      s += "<line x1=\"" + fixed(p.x0 - 5) + "\" y1=\"" + fixed(Y) + "\" x2=\"" + fixed(p.x0 + p.w) + "\" y2=\"" +
           fixed(Y) + "\" stroke=\"#ddd\"/>\n";
      s += "<text x=\"" + fixed(p.x0 - 8) + "\" y=\"" + fixed(Y + 4) + "\" text-anchor=\"end\">" + fixed(y) +
           "</text>\n";
    }
  }
  s += "<text x=\"" + fixed(p.x0 + p.w / 2) + "\" y=\"" + fixed(p.y0 + p.h + 38) + "\" text-anchor=\"middle\">" +
       xlabel + "</text>\n";
  s += "<text transform=\"translate(" + fixed(p.x0 - 48) + " " + fixed(p.y0 + p.h / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + ylabel + "</text>\n";
  s += "<text x=\"" + fixed(p.x0 + p.w / 2) + "\" y=\"" + fixed(p.y0 - 10) + "\" text-anchor=\"middle\">" + title +
       "</text>\n";
}

using Series = std::vector<std::pair<double, double>>;

inline void draw_series(std::string& s, const Panel& p, const Series& pts, const char* colour) {
  if (pts.empty()) return;
  if (pts.size() > 1) {
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      s += (i ? " " : "") + fixed(p.px(pts[i].first)) + "," + fixed(p.py(pts[i].second));
    }
    s += "\"/>\n";
  }
  for (const auto& [x, y] : pts) {
    s += "<circle cx=\"" + fixed(p.px(x)) + "\" cy=\"" + fixed(p.py(y)) + "\" r=\"3.5\" fill=\"" + colour + "\"/>\n";
  }
}

}  // namespace detail

/// SVG document for the cells sharing one delta: aggregated lambda_low on a
/// log axis (left) and recovery probability (right) against rho, one curve
/// per L. Identical input gives identical bytes.
inline std::string render_transition_svg(const std::vector<CellResult>& cells, double delta) {
  std::map<Index, detail::Series> low, prob;
  std::vector<double> rhos;
  Index N = 0;
  for (const auto& c : cells) {
    if (c.cell.delta != delta) continue;
    N = c.cell.N;
    rhos.push_back(c.cell.rho);
    prob[c.cell.L].emplace_back(c.cell.rho, c.probability());
    const double l = c.lambda_low();
    if (std::isfinite(l) && l > 0.0) low[c.cell.L].emplace_back(c.cell.rho, l);
    low.try_emplace(c.cell.L);
  }
  if (rhos.empty()) throw Error("render_transition_svg: no cells with delta = " + format_double(delta));
  std::sort(rhos.begin(), rhos.end());
  rhos.erase(std::unique(rhos.begin(), rhos.end()), rhos.end());
  for (auto* m : {&low, &prob}) {
    for (auto& [_, pts] : *m) std::sort(pts.begin(), pts.end());
  }

  double xmin = rhos.front(), xmax = rhos.back();
  if (xmax - xmin < 1e-12) {
    xmin -= 0.05;
    xmax += 0.05;
  } else {
    const double pad = 0.05 * (xmax - xmin);
    xmin -= pad;
    xmax += pad;
  }
  double lmin = kInf, lmax = -kInf;
  for (const auto& [_, pts] : low) {
    for (const auto& pt : pts) {
      lmin = std::min(lmin, std::log10(pt.second));
      lmax = std::max(lmax, std::log10(pt.second));
    }
  }
  if (!std::isfinite(lmin)) {
    lmin = -1.0;
    lmax = 1.0;
  }
  lmin = std::floor(lmin);
  lmax = std::max(std::ceil(lmax), lmin + 1.0);

  const detail::Panel left{80, 50, 360, 260, xmin, xmax, lmin, lmax, true};
  const detail::Panel right{560, 50, 360, 260, xmin, xmax, 0.0, 1.0, false};
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"400\" viewBox=\"0 0 1000 400\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"1000\" height=\"400\" fill=\"#fff\"/>\n";
  const std::string suffix = "N = " + std::to_string(N) + ", delta = " + format_double(delta);
  detail::draw_axes(s, left, rhos, "rho = K/M", "lambda_low (max over recovered trials)", "lower bound, " + suffix);
  detail::draw_axes(s, right, rhos, "rho = K/M", "recovery probability", "certified recovery, " + suffix);
  size_t i = 0;
  for (const auto& [L, pts] : prob) {
    const char* colour = detail::series_colour(i);
    detail::draw_series(s, left, low[L], colour);
    detail::draw_series(s, right, pts, colour);
    const double ly = 70.0 + 16.0 * static_cast<double>(i);
    s += "<line x1=\"830\" y1=\"" + detail::fixed(ly) + "\" x2=\"850\" y2=\"" + detail::fixed(ly) + "\" stroke=\"" +
         colour + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"855\" y=\"" + detail::fixed(ly + 4) + "\">L = " + std::to_string(L) + "</text>\n";
    ++i;
  }
  s += "</svg>\n";
  return s;
}

/// One SVG file per delta in `dir`; returns the paths in ascending delta order.
inline std::vector<std::string> emit_plots(const std::vector<CellResult>& cells, const std::string& dir) {
  if (cells.empty()) throw Error("emit_plots: no results to plot");
  std::vector<double> deltas;
  for (const auto& c : cells) deltas.push_back(c.cell.delta);
  std::sort(deltas.begin(), deltas.end());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());
  std::filesystem::create_directories(dir);
  std::vector<std::string> out;
  for (double d : deltas) {
    const std::string path = (std::filesystem::path(dir) / ("transition_delta_" + format_double(d) + ".svg")).string();
    write_text_file(path, render_transition_svg(cells, d));
    out.push_back(path);
  }
  return out;
}

}  // namespace pcal

#endif  // PCAL_PLOT_HPP
