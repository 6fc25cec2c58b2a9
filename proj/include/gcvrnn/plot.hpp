#pragma once

#include <algorithm>
#include <limits>
#include <sstream>
#include <string>

#include "gcvrnn/dataset_io.hpp"

namespace gcvrnn {

struct PlotOutput {
  std::string svg;
  std::string csv;
};

inline constexpr const char* kPlotCsvHeader = "agent,t,kind,x,y";

/// Static trajectory plot of one result record. Per agent one `<g class="agent">`
/// holding solid polylines over observed runs, circle markers at imputed
/// points, a dashed polyline for the prediction and a start marker. The CSV
/// lists every plotted point (t_past + t_future rows per agent).
inline PlotOutput render_plot(const DatasetRecord& rec) {
  if (!rec.result) throw ParseError("record " + rec.sequence.id + " has no result section");
  const auto& s = rec.sequence;
  const std::size_t N = s.agents, tp = s.t_past, tf = s.t_future;
  const auto& imp = rec.result->imputed;
  const auto& pre = rec.result->predicted;
  auto point = [&](std::size_t t, std::size_t i) {
    return t < tp ? Vec2{imp[(t * N + i) * 2], imp[(t * N + i) * 2 + 1]}
                  : Vec2{pre[((t - tp) * N + i) * 2], pre[((t - tp) * N + i) * 2 + 1]};
  };

  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x, hi_x = -lo_x, hi_y = -lo_x;
  for (std::size_t t = 0; t < tp + tf; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      const Vec2 p = point(t, i);
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  }
  const double size = 600.0, pad = 20.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double k = (size - 2 * pad) / span;
  auto sx = [&](double x) { return pad + (x - lo_x) * k; };
  auto sy = [&](double y) { return size - pad - (y - lo_y) * k; };  // y up

  std::ostringstream svg, csv;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
      << size << ' ' << size << "\">\n";
  svg << "<title>" << s.id << "</title>\n";
  csv << kPlotCsvHeader << '\n';
  for (std::size_t i = 0; i < N; ++i) {
    svg << "<g class=\"agent\" id=\"agent-" << i << "\">\n";
    std::string run;
    auto flush = [&] {
      if (!run.empty()) svg << "<polyline class=\"observed\" fill=\"none\" stroke=\"black\" points=\"" << run << "\"/>\n";
      run.clear();
    };
    for (std::size_t t = 0; t < tp; ++t) {
      const Vec2 p = point(t, i);
      const bool vis = rec.mask.visible(t, i);
      csv << i << ',' << t << ',' << (vis ? "observed" : "imputed") << ',' << detail::format_double(p.x) << ','
          << detail::format_double(p.y) << '\n';
      if (vis) {
        run += (run.empty() ? "" : " ") + detail::format_double(sx(p.x)) + "," + detail::format_double(sy(p.y));
      } else {
        flush();
        svg << "<circle class=\"imputed\" r=\"3\" fill=\"red\" cx=\"" << detail::format_double(sx(p.x)) << "\" cy=\""
            << detail::format_double(sy(p.y)) << "\"/>\n";
      }
    }
    flush();
    if (tf > 0) {
      std::string dashed;
      for (std::size_t t = tp == 0 ? tp : tp - 1; t < tp + tf; ++t) {
        const Vec2 p = point(t, i);
        dashed += (dashed.empty() ? "" : " ") + detail::format_double(sx(p.x)) + "," + detail::format_double(sy(p.y));
      }
      svg << "<polyline class=\"predicted\" fill=\"none\" stroke=\"blue\" stroke-dasharray=\"6,4\" points=\"" << dashed
          << "\"/>\n";
      for (std::size_t t = tp; t < tp + tf; ++t) {
        const Vec2 p = point(t, i);
        csv << i << ',' << t << ",predicted," << detail::format_double(p.x) << ',' << detail::format_double(p.y) << '\n';
      }
    }
    const Vec2 p0 = point(0, i);
    svg << "<rect class=\"start\" width=\"6\" height=\"6\" x=\"" << detail::format_double(sx(p0.x) - 3) << "\" y=\""
        << detail::format_double(sy(p0.y) - 3) << "\"/>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return {svg.str(), csv.str()};
}

}  // namespace gcvrnn
