#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "freezehpo/analysis/landscape.hpp"
#include "freezehpo/core/error.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"

namespace freezehpo {

namespace csv {

// RFC 4180 field quoting.
inline std::string field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string row(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += field(fields[i]);
  }
  return out + "\r\n";
}

inline std::string row(std::initializer_list<std::string> fields) {
  return row(std::span<const std::string>(fields.begin(), fields.size()));
}

}  // namespace csv

inline std::string format_number(double v, const char* fmt = "%.6g") {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string percent_label(double fraction) { return format_number(fraction * 100.0, "%.2f") + "%"; }

inline const std::vector<std::string>& comparison_header() {
  static const std::vector<std::string> h{"Data Level", "Configuration", "Rank Correlation", "FLOPs", "Cost"};
  return h;
}

// Per-rung comparison in the layout of a multi-fidelity savings table: one
// block per data level (ascending), one row per trace within the block.
// FLOPs and Cost (seconds) are cumulative up to and including the rung.
inline std::string comparison_csv(std::span<const ShTrace> traces) {
  std::string out = csv::row(comparison_header());
  std::map<double, std::vector<std::vector<std::string>>> blocks;
  for (const auto& t : traces) {
    const std::string mode = t.mode == ShMode::diagonal ? "diagonal SH" : "single SH";
    for (const auto& r : t.rungs) {
      const double data = r.fidelity.data_fraction();
      const std::string layers = r.fidelity.has(kLayersAxis) ? std::to_string(r.fidelity.layers()) : "all";
      blocks[data].push_back({percent_label(data), "Layer " + layers + " (" + mode + ")",
                              r.rank_correlation ? format_number(*r.rank_correlation, "%.4f") : "",
                              std::to_string(r.cumulative_flops), format_number(r.cumulative_wall_ms / 1000.0, "%.6f")});
    }
  }
  for (const auto& [level, rows] : blocks)
    for (const auto& r : rows) out += csv::row(r);
  return out;
}

inline std::string landscape_csv(const RankLandscape& l) {
  std::vector<std::string> header{l.row_axis.name + "\\" + l.col_axis.name};
  for (double c : l.col_axis.levels) header.push_back(format_number(c, "%.10g"));
  std::string out = csv::row(header);
  for (std::size_t i = 0; i < l.row_axis.size(); ++i) {
    std::vector<std::string> r{format_number(l.row_axis.levels[i], "%.10g")};
    for (double v : l.rho[i]) r.push_back(format_number(v, "%.6f"));
    out += csv::row(r);
  }
  return out;
}

namespace detail {

// Diverging palette: -1 blue, 0 white, +1 red.
inline std::string rho_color(double rho) {
  const double t = std::clamp(rho, -1.0, 1.0);
  int r = 255, g = 255, b = 255;
  if (t >= 0) {
    g = b = static_cast<int>(std::lround(255 * (1.0 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1.0 + t)));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace detail

// Self-contained SVG heatmap; the highest row level is drawn on top.
// Cells meeting a threshold get an outline whose width grows with the threshold.
inline std::string landscape_svg(const RankLandscape& l, std::span<const double> thresholds = {}) {
  const int cell = 48, left = 70, top = 30, bottom = 50;
  const int cols = static_cast<int>(l.col_axis.size()), rows = static_cast<int>(l.row_axis.size());
  const int width = left + cols * cell + 20, height = top + rows * cell + bottom;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"18\">rank correlation vs " << l.reference.key() << "</text>\n";
  const auto masks = threshold_map(l, thresholds);
  for (int i = 0; i < rows; ++i) {
    const int y = top + (rows - 1 - i) * cell;
    s << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
      << format_number(l.row_axis.levels[static_cast<std::size_t>(i)], "%.4g") << "</text>\n";
    for (int j = 0; j < cols; ++j) {
      const int x = left + j * cell;
      const double v = l.rho[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
        << detail::rho_color(v) << "\" stroke=\"#999\" stroke-width=\"0.5\"/>\n";
      for (std::size_t k = 0; k < masks.size(); ++k)
        if (masks[k].mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
          s << "<rect x=\"" << x + 2 + 2 * static_cast<int>(k) << "\" y=\"" << y + 2 + 2 * static_cast<int>(k)
            << "\" width=\"" << cell - 4 - 4 * static_cast<int>(k) << "\" height=\"" << cell - 4 - 4 * static_cast<int>(k)
            << "\" fill=\"none\" stroke=\"#000\" stroke-width=\"1\"/>\n";
      s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
        << format_number(v, "%.2f") << "</text>\n";
    }
  }
  for (int j = 0; j < cols; ++j)
    s << "<text x=\"" << left + j * cell + cell / 2 << "\" y=\"" << top + rows * cell + 16 << "\" text-anchor=\"middle\">"
      << format_number(l.col_axis.levels[static_cast<std::size_t>(j)], "%.4g") << "</text>\n";
  s << "<text x=\"" << left + cols * cell / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << l.col_axis.name
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << top + rows * cell / 2 << "\" transform=\"rotate(-90 14 " << top + rows * cell / 2
    << ")\" text-anchor=\"middle\">" << l.row_axis.name << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline json to_summary_json(const RankLandscape& l, std::span<const double> thresholds) {
  json rho = json::array();
  for (const auto& row : l.rho) {
    json r = json::array();
    for (double v : row) r.push_back(std::isnan(v) ? json(nullptr) : json(v));
    rho.push_back(std::move(r));
  }
  json masks = json::array();
  for (const auto& m : threshold_map(l, thresholds)) masks.push_back({{"threshold", m.threshold}, {"mask", m.mask}});
  return json{{"row_axis", {{"name", l.row_axis.name}, {"levels", l.row_axis.levels}}},
              {"col_axis", {{"name", l.col_axis.name}, {"levels", l.col_axis.levels}}},
              {"reference", l.reference},
              {"n_configs", l.n_configs},
              {"n_seeds", l.n_seeds},
              {"rho", std::move(rho)},
              {"thresholds", std::move(masks)}};
}

inline json to_summary_json(const ShTrace& t) {
  json rungs = json::array();
  for (const auto& r : t.rungs) rungs.push_back(r);
  return json{{"mode", to_string(t.mode)}, {"winner_id", t.winner_id}, {"rungs", std::move(rungs)}};
}

struct ReportOptions {
  bool svg = true;
  std::vector<double> thresholds{0.6, 0.85, 0.95};
};

struct ReportFiles {
  std::filesystem::path comparison_csv;
  std::filesystem::path summary_json;
  std::vector<std::filesystem::path> landscape_csvs;
  std::vector<std::filesystem::path> svgs;
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << content;
  if (!f) throw IoError("write failed for " + p.string());
}

}  // namespace detail

// Writes comparison.csv, landscape_<k>.csv (+ .svg) and summary.json into `dir`.
inline ReportFiles export_report(const std::filesystem::path& dir, std::span<const ShTrace> traces,
                                 std::span<const RankLandscape> landscapes, const ReportOptions& options = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  ReportFiles files;
  files.comparison_csv = dir / "comparison.csv";
  detail::write_file(files.comparison_csv, comparison_csv(traces));
  json summary{{"traces", json::array()}, {"landscapes", json::array()}};
  for (const auto& t : traces) summary["traces"].push_back(to_summary_json(t));
  for (std::size_t k = 0; k < landscapes.size(); ++k) {
    const auto base = dir / ("landscape_" + std::to_string(k));
    files.landscape_csvs.push_back(base.string() + ".csv");
    detail::write_file(files.landscape_csvs.back(), landscape_csv(landscapes[k]));
    if (options.svg) {
      files.svgs.push_back(base.string() + ".svg");
      detail::write_file(files.svgs.back(), landscape_svg(landscapes[k], options.thresholds));
    }
    summary["landscapes"].push_back(to_summary_json(landscapes[k], options.thresholds));
  }
  files.summary_json = dir / "summary.json";
  detail::write_file(files.summary_json, summary.dump(2) + "\n");
  return files;
}

}  // namespace freezehpo
