#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "milodo/milodo.hpp"

namespace milodo {

struct MethodSeries {
  std::string method;
  std::vector<IterationRecord> records;
};

// CSV contract: header "method,iter,loss,gap,consensus_error,wall_ms",
// floats printed with %.17g so reruns compare byte-for-byte.
void write_metrics_csv(const std::vector<MethodSeries>& series, std::ostream& out);
void write_metrics_csv_file(const std::vector<MethodSeries>& series, const std::string& path);

std::vector<MethodSeries> read_metrics_csv(std::istream& in);
std::vector<MethodSeries> read_metrics_csv_file(const std::string& path);

enum class PlotField { loss, gap, consensus };

// Semi-log convergence plot (log10 on the y axis). Non-positive values are
// clamped to the smallest positive value present so curves that hit zero
// still render.
std::string render_svg_plot(const std::vector<MethodSeries>& series, PlotField field,
                            const std::string& title);
void write_svg_plot_file(const std::vector<MethodSeries>& series, PlotField field,
                         const std::string& title, const std::string& path);

}  // namespace milodo
