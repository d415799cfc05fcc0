// Copyright 2026 The bioctx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bioctx/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {

using nlohmann::json;

json spread(const std::vector<double>& v) {
  if (v.empty()) return {{"median", nullptr}, {"p5", nullptr}, {"p95", nullptr}, {"n", 0}};
  return {{"median", percentile(v, 0.5)},
          {"p5", percentile(v, 0.05)},
          {"p95", percentile(v, 0.95)},
          {"n", v.size()}};
}

void collect(const json& node, std::vector<double>& out) {
  if (node.is_number()) out.push_back(node.get<double>());
}

std::string cell(const json& v) {
  if (v.is_number()) return fmt::format("{:.6f}", v.get<double>());
  return "";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

json assemble_report(const Config& config, const std::string& mode, const std::string& scheme,
                     const std::vector<std::string>& classes, json folds,
                     std::vector<std::string> warnings) {
  const RunConfig run = resolve(config);
  json r;
  r["format"] = "bioctx-report-1";
  r["mode"] = mode;
  r["scheme"] = scheme;
  r["segment"] = run.segment;
  r["classes"] = classes;
  json cfg = json::object();
  for (const auto& [k, v] : config.values()) cfg[k] = config.get_text(k);
  r["config"] = cfg;
  r["fold_count"] = folds.size();

  std::vector<double> f, mf, mp, mr, macro, auc;
  for (const auto& fold : folds) {
    collect(fold["f"], f);
    collect(fold["micro"]["f"], mf);
    collect(fold["micro"]["precision"], mp);
    collect(fold["micro"]["recall"], mr);
    collect(fold["macro_f"], macro);
    collect(fold["mean_auc"], auc);
  }
  json summary;
  summary["f"] = spread(f);
  summary["micro_f"] = spread(mf);
  summary["micro_precision"] = spread(mp);
  summary["micro_recall"] = spread(mr);
  summary["macro_f"] = spread(macro);
  summary["mean_auc"] = spread(auc);
  json per_class = json::array();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<double> cf, ca;
    for (const auto& fold : folds) {
      const json& row = fold["classes"][c];
      if (row["recall_defined"].get<bool>()) collect(row["f"], cf);
      collect(row["auc"], ca);
    }
    per_class.push_back({{"class", classes[c]}, {"f", spread(cf)}, {"auc", spread(ca)}});
  }
  summary["classes"] = per_class;
  r["summary"] = summary;
  r["folds"] = std::move(folds);
  r["warnings"] = std::move(warnings);
  return r;
}

std::string report_csv(const json& report) {
  const json& folds = report.at("folds");
  std::string out = "class,metric";
  for (const auto& f : folds) out += "," + f.at("id").get<std::string>();
  out += ",median\n";
  auto row = [&](const std::string& cls, const std::string& metric, auto getter) {
    std::vector<double> values;
    out += cls + "," + metric;
    for (const auto& f : folds) {
      const json v = getter(f);
      out += "," + cell(v);
      if (v.is_number()) values.push_back(v.get<double>());
    }
    out += "," + (values.empty() ? std::string() : fmt::format("{:.6f}", percentile(values, 0.5)));
    out += "\n";
  };
  for (const char* m : {"f", "precision", "recall"})
    row("micro", m, [&](const json& f) { return f["micro"][m]; });
  row("all", "macro_f", [](const json& f) { return f["macro_f"]; });
  row("all", "mean_auc", [](const json& f) { return f["mean_auc"]; });
  const auto& classes = report.at("classes");
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (const char* m : {"auc", "f", "precision", "recall", "threshold"})
      row(classes[c].get<std::string>(), m, [&](const json& f) { return f["classes"][c][m]; });
  return out;
}

std::string timeline_svg(const json& fold) {
  const json& tl = fold.at("timeline");
  const auto& truth = tl.at("truth");
  const auto& pred = tl.at("predicted");
  const std::string na = tl.at("na").get<std::string>();
  const std::size_t rows = truth.size();
  const std::size_t steps = na.size();
  const double left = 150.0, width = 900.0, row_h = 18.0, top = 30.0;
  const double cell_w = steps ? width / static_cast<double>(steps) : width;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      left + width + 20, top + row_h * static_cast<double>(rows) + 40);
  out += fmt::format("<text x=\"{:.0f}\" y=\"18\">{} (segment {} s): green TP, red FP, blue FN, grey NA</text>\n",
                     left, xml_escape(fold.at("id").get<std::string>()), tl.at("segment").get<double>());
  for (std::size_t c = 0; c < rows; ++c) {
    const double y = top + row_h * static_cast<double>(c);
    const std::string t = truth[c].get<std::string>();
    const std::string p = pred[c].get<std::string>();
    out += fmt::format("<text x=\"4\" y=\"{:.1f}\">{}</text>\n", y + 13,
                       xml_escape(fold.at("classes")[c].at("class").get<std::string>()));
    for (std::size_t s = 0; s < steps; ++s) {
      const char* colour = nullptr;
      if (na[s] == '1') colour = "#bbbbbb";
      else if (t[s] == '1' && p[s] == '1') colour = "#2ca02c";
      else if (p[s] == '1') colour = "#d62728";
      else if (t[s] == '1') colour = "#1f77b4";
      if (!colour) continue;
      out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                         left + cell_w * static_cast<double>(s), y + 2, cell_w, row_h - 4, colour);
    }
  }
  out += "</svg>\n";
  return out;
}

std::string time_budget_svg(const json& fold) {
  const json& b = fold.at("time_budget");
  const auto& truth = b.at("truth");
  const auto& pred = b.at("predicted");
  const std::size_t rows = truth.size();
  const std::size_t groups = rows ? truth[0].size() : 0;
  const double left = 150.0, row_h = 40.0, top = 30.0;
  const double group_w = groups ? std::min(60.0, 900.0 / static_cast<double>(groups)) : 60.0;
  const double width = group_w * static_cast<double>(groups);
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      left + width + 20, top + row_h * static_cast<double>(rows) + 20);
  out += fmt::format("<text x=\"{:.0f}\" y=\"18\">activity per {} s interval: grey truth, orange predicted</text>\n",
                     left, b.at("interval").get<double>());
  for (std::size_t c = 0; c < rows; ++c) {
    const double base = top + row_h * static_cast<double>(c + 1) - 4;
    out += fmt::format("<text x=\"4\" y=\"{:.1f}\">{}</text>\n", base - 10,
                       xml_escape(fold.at("classes")[c].at("class").get<std::string>()));
    for (std::size_t g = 0; g < groups; ++g) {
      const double x = left + group_w * static_cast<double>(g);
      const double bar_w = group_w * 0.4;
      for (int k = 0; k < 2; ++k) {
        const json& v = (k == 0 ? truth : pred)[c][g];
        if (!v.is_number()) continue;
        const double h = (row_h - 8) * std::clamp(v.get<double>(), 0.0, 1.0);
        out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                           x + bar_w * k + 2, base - h, bar_w, h, k == 0 ? "#888888" : "#ff7f0e");
      }
    }
  }
  out += "</svg>\n";
  return out;
}

void write_report_files(const std::filesystem::path& dir, const json& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw IoError(fmt::format("cannot write {}", (dir / name).string()));
  };
  write("report.json", report.dump(2) + "\n");
  write("report.csv", report_csv(report));
  const auto& folds = report.at("folds");
  for (std::size_t k = 0; k < folds.size(); ++k) {
    if (folds[k].contains("timeline")) write(fmt::format("fold{:02d}_timeline.svg", k), timeline_svg(folds[k]));
    if (!folds[k]["time_budget"].is_null())
      write(fmt::format("fold{:02d}_budget.svg", k), time_budget_svg(folds[k]));
  }
}

}  // namespace bioctx
