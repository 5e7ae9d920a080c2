#include "uca/eval/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "uca/error.hpp"

namespace uca::eval {

namespace {

constexpr double kW = 640, kH = 400, kL = 70, kR = 150, kT = 40, kB = 60;
constexpr const char* kPalette[] = {"#3b6ea5", "#d9822b", "#4a9c5d", "#b84a4a", "#7d5ba6", "#8c8c8c"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string header(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{3}</text>\n",
      kW, kH, (kL + kW - kR) / 2, esc(title));
}

std::string legend(const std::vector<Series>& series) {
  std::string s;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kT + 10 + 18.0 * static_cast<double>(i);
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", kW - kR + 12, y,
                     kPalette[i % 6]);
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kW - kR + 30, y + 10, esc(series[i].label));
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFile("report not found: " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::string& x_label,
                          const std::vector<std::string>& categories, const std::vector<Series>& series) {
  const double pw = kW - kL - kR, ph = kH - kT - kB;
  std::string s = header(title);
  for (int t = 0; t <= 4; ++t) {
    const double y = kT + ph * (1.0 - t / 4.0);
    s += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n", kL, kL + pw, y, y);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}%</text>\n", kL - 6, y + 4, t * 25);
  }
  const double group = categories.empty() ? pw : pw / static_cast<double>(categories.size());
  const double bar = series.empty() ? 0.0 : group * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kL + group * static_cast<double>(c) + group * 0.1;
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = c < series[k].values.size() ? std::clamp(series[k].values[c], 0.0, 1.0) : 0.0;
      const double h = ph * v;
      s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\">"
                       "<title>{:.1f}%</title></rect>\n",
                       gx + bar * static_cast<double>(k), kT + ph - h, bar, h, kPalette[k % 6], 100 * v);
    }
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", gx + group * 0.4,
                     kT + ph + 18, esc(categories[c]));
  }
  s += fmt::format("<line x1=\"{0}\" x2=\"{0}\" y1=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n", kL, kT, kT + ph);
  s += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"black\"/>\n", kL, kL + pw, kT + ph);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kL + pw / 2, kH - 15, esc(x_label));
  s += fmt::format("<text x=\"18\" y=\"{0}\" transform=\"rotate(-90 18 {0})\" text-anchor=\"middle\">"
                   "attack success rate</text>\n",
                   kT + ph / 2);
  s += legend(series);
  return s + "</svg>\n";
}

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<double>& x, const std::vector<Series>& series) {
  const double pw = kW - kL - kR, ph = kH - kT - kB;
  double x0 = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  double x1 = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  double y0 = INFINITY, y1 = -INFINITY;
  for (const auto& se : series)
    for (double v : se.values)
      if (std::isfinite(v)) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return kL + pw * (v - x0) / (x1 - x0); };
  auto py = [&](double v) { return kT + ph * (1.0 - (v - y0) / (y1 - y0)); };

  std::string s = header(title);
  for (int t = 0; t <= 4; ++t) {
    const double v = y0 + (y1 - y0) * t / 4.0;
    s += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", kL, kL + pw, py(v),
                     py(v));
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kL - 6, py(v) + 4, v);
    const double xv = x0 + (x1 - x0) * t / 4.0;
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px(xv), kT + ph + 18, xv);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < std::min(x.size(), series[k].values.size()); ++i)
      if (std::isfinite(series[k].values[i])) pts += fmt::format("{:.2f},{:.2f} ", px(x[i]), py(series[k].values[i]));
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", kPalette[k % 6],
                     pts);
  }
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kL, kT, pw,
                   ph);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kL + pw / 2, kH - 15, esc(x_label));
  s += fmt::format("<text x=\"18\" y=\"{0}\" transform=\"rotate(-90 18 {0})\" text-anchor=\"middle\">{1}</text>\n",
                   kT + ph / 2, esc(y_label));
  s += legend(series);
  return s + "</svg>\n";
}

std::vector<std::filesystem::path> plot_reports(const std::vector<std::filesystem::path>& summaries,
                                                const std::vector<std::string>& labels,
                                                const std::filesystem::path& out_dir) {
  if (summaries.empty()) throw PreconditionError("plot needs at least one summary.json");
  std::vector<nlohmann::json> docs;
  for (const auto& p : summaries) docs.push_back(read_json(p));

  auto chart = [&](const char* field, const char* unit, const std::string& title, const std::string& x_label,
                   const std::string& file) {
    std::set<double> keys;
    for (const auto& d : docs) {
      if (!d.contains(field)) throw FormatError(std::string("summary lacks ") + field);
      for (const auto& [k, v] : d[field].items()) keys.insert(std::stod(k));
    }
    std::vector<std::string> cats;
    for (double k : keys) cats.push_back(fmt::format("{:g}{}", k, unit));
    std::vector<Series> series;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      Series se;
      se.label = i < labels.size() ? labels[i] : summaries[i].parent_path().filename().string();
      if (se.label.empty()) se.label = "report";
      std::map<double, double> m;
      for (const auto& [k, v] : docs[i][field].items()) m[std::stod(k)] = v.get<double>();
      for (double k : keys) se.values.push_back(m.count(k) ? m[k] : 0.0);
      series.push_back(std::move(se));
    }
    const auto path = out_dir / file;
    write_text(path, bar_chart_svg(title, x_label, cats, series));
    return path;
  };

  std::filesystem::create_directories(out_dir);
  return {chart("success_by_distance", " m", "Attack success vs distance", "capture distance",
                "success_vs_distance.svg"),
          chart("success_by_pitch", " deg", "Attack success vs pitch", "camera pitch", "success_vs_pitch.svg")};
}

std::filesystem::path plot_loss(const std::filesystem::path& loss_log, const std::filesystem::path& out_dir) {
  std::ifstream is(loss_log);
  if (!is) throw MissingFile("loss log not found: " + loss_log.string());
  std::vector<double> it;
  Series div{"divergence", {}}, smooth{"smoothness (weighted)", {}}, total{"total", {}};
  std::string line;
  double lambda = 1.0;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(loss_log.string() + ": " + e.what());
    }
    it.push_back(j.at("iteration").get<double>());
    div.values.push_back(j.at("divergence").get<double>());
    total.values.push_back(j.at("total").get<double>());
    smooth.values.push_back(j.at("smoothness").get<double>());
  }
  // Weighted smoothness is what the total actually adds to divergence.
  for (std::size_t i = 0; i < smooth.values.size(); ++i) {
    lambda = smooth.values[i] != 0.0 ? (total.values[i] - div.values[i]) / smooth.values[i] : lambda;
    smooth.values[i] *= lambda;
  }
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / "loss_curve.svg";
  write_text(path, line_chart_svg("Attack objective", "iteration", "loss", it, {div, smooth, total}));
  return path;
}

}  // namespace uca::eval
