#pragma once

// Dependency-free SVG charts for evaluation summaries and loss logs.

#include <filesystem>
#include <string>
#include <vector>

namespace uca::eval {

struct Series {
  std::string label;
  std::vector<double> values;  // one per category
};

/// Grouped bar chart; values are fractions in [0,1] drawn as percentages.
std::string bar_chart_svg(const std::string& title, const std::string& x_label,
                          const std::vector<std::string>& categories, const std::vector<Series>& series);

/// Polyline of y over x with autoscaled axes.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<double>& x, const std::vector<Series>& series);

/// success_vs_distance.svg and success_vs_pitch.svg from one or more
/// summary.json files (one series per report, labelled by `labels` or the
/// parent directory name). Returns the written paths.
std::vector<std::filesystem::path> plot_reports(const std::vector<std::filesystem::path>& summaries,
                                                const std::vector<std::string>& labels,
                                                const std::filesystem::path& out_dir);

/// loss_curve.svg (divergence, smoothness, total) from a loss_log.jsonl.
std::filesystem::path plot_loss(const std::filesystem::path& loss_log, const std::filesystem::path& out_dir);

}  // namespace uca::eval
