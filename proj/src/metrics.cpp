#include "milodo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "milodo/errors.hpp"

namespace milodo {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double pick(const IterationRecord& rec, PlotField field) {
  switch (field) {
    case PlotField::loss: return rec.loss;
    case PlotField::gap: return rec.gap;
    case PlotField::consensus: return rec.consensus;
  }
  return rec.loss;
}

std::string field_label(PlotField field) {
  switch (field) {
    case PlotField::loss: return "loss";
    case PlotField::gap: return "optimality gap";
    case PlotField::consensus: return "consensus error";
  }
  return "";
}

}  // namespace

void write_metrics_csv(const std::vector<MethodSeries>& series, std::ostream& out) {
  out << "method,iter,loss,gap,consensus_error,wall_ms\n";
  for (const MethodSeries& s : series)
    for (const IterationRecord& rec : s.records)
      out << s.method << ',' << rec.iter << ',' << fmt17(rec.loss) << ',' << fmt17(rec.gap)
          << ',' << fmt17(rec.consensus) << ',' << fmt17(rec.wall_ms) << '\n';
}

void write_metrics_csv_file(const std::vector<MethodSeries>& series, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + path);
  write_metrics_csv(series, out);
}

std::vector<MethodSeries> read_metrics_csv(std::istream& in) {
  std::vector<MethodSeries> series;
  std::string line;
  if (!std::getline(in, line) || line != "method,iter,loss,gap,consensus_error,wall_ms")
    throw ParameterError("metrics csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string method, cell;
    if (!std::getline(ss, method, ',')) throw ParameterError("metrics csv: bad row");
    IterationRecord rec;
    auto next = [&]() {
      if (!std::getline(ss, cell, ',')) throw ParameterError("metrics csv: bad row");
      return std::stod(cell);
    };
    rec.iter = static_cast<int>(next());
    rec.loss = next();
    rec.gap = next();
    rec.consensus = next();
    rec.wall_ms = next();
    if (series.empty() || series.back().method != method)
      series.push_back({method, {}});
    series.back().records.push_back(rec);
  }
  return series;
}

std::vector<MethodSeries> read_metrics_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open for reading: " + path);
  return read_metrics_csv(in);
}

std::string render_svg_plot(const std::vector<MethodSeries>& series, PlotField field,
                            const std::string& title) {
  constexpr double W = 760, Hgt = 480;
  constexpr double ml = 70, mr = 160, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = Hgt - mt - mb;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

  int max_iter = 1;
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = 0.0;
  for (const MethodSeries& s : series)
    for (const IterationRecord& rec : s.records) {
      max_iter = std::max(max_iter, rec.iter);
      const double v = pick(rec, field);
      if (v > 0.0 && std::isfinite(v)) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
  if (!(vmax > 0.0)) {
    vmin = 1e-16;
    vmax = 1.0;
  }
  const double lo = std::floor(std::log10(vmin));
  const double hi = std::ceil(std::log10(vmax) + 1e-12);
  const double span = std::max(hi - lo, 1.0);

  auto px = [&](double iter) { return ml + pw * (iter - 1.0) / std::max(max_iter - 1, 1); };
  auto py = [&](double v) {
    const double lv = std::log10(std::max(v, vmin));
    return mt + ph * (hi - lv) / span;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hgt
      << "\" viewBox=\"0 0 " << W << ' ' << Hgt << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

  for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); ++e) {
    const double y = py(std::pow(10.0, e));
    svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << e
        << "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double iter = 1.0 + (max_iter - 1.0) * t / 4.0;
    const double x = px(iter);
    svg << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
        << mt + ph + 5 << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << static_cast<int>(std::lround(iter)) << "</text>\n";
  }
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << Hgt - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">iteration"
      << "</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\" text-anchor=\"middle\">" << field_label(field) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % 8];
    std::ostringstream pts;
    for (const IterationRecord& rec : series[s].records) {
      const double v = pick(rec, field);
      if (!std::isfinite(v)) continue;
      pts << px(rec.iter) << ',' << py(std::max(v, vmin)) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    const double ly = mt + 16.0 * (s + 1);
    svg << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].method << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_svg_plot_file(const std::vector<MethodSeries>& series, PlotField field,
                         const std::string& title, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open for writing: " + path);
  out << render_svg_plot(series, field, title);
}

}  // namespace milodo
