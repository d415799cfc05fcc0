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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bioctx/config.hpp"

namespace bioctx {

// Wraps per-fold results with the run description and the across-fold
// summary (median, 5th and 95th percentiles).
nlohmann::json assemble_report(const Config& config, const std::string& mode,
                               const std::string& scheme,
                               const std::vector<std::string>& classes,
                               nlohmann::json folds, std::vector<std::string> warnings);

// Linear interpolation between order statistics; NaN for no values.
double percentile(std::vector<double> values, double q);

std::string report_csv(const nlohmann::json& report);
std::string timeline_svg(const nlohmann::json& fold);
std::string time_budget_svg(const nlohmann::json& fold);

// report.json, report.csv, and per-fold timeline / time-budget SVGs.
void write_report_files(const std::filesystem::path& dir, const nlohmann::json& report);

}  // namespace bioctx
