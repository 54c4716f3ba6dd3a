// Copyright 2026 The tse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Metric report: a tab-separated header, one row per test item and a final
// row of means.
//
//   id  si_sdr_in  si_sdr_out  delta
//   ...
//   mean  <mean in>  <mean out>  <mean delta>

#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tse/errors.hpp"

namespace tse::losses {

struct MetricRow {
  std::string id;
  double si_sdr_in = 0.0;
  double si_sdr_out = 0.0;
  double delta() const { return si_sdr_out - si_sdr_in; }
};

struct MetricSummary {
  std::size_t count = 0;
  double mean_in = 0.0;
  double mean_out = 0.0;
  double mean_delta = 0.0;
};

inline MetricSummary summarize(const std::vector<MetricRow>& rows) {
  MetricSummary s;
  s.count = rows.size();
  if (rows.empty()) return s;
  for (const auto& r : rows) {
    s.mean_in += r.si_sdr_in;
    s.mean_out += r.si_sdr_out;
    s.mean_delta += r.delta();
  }
  const double n = static_cast<double>(rows.size());
  s.mean_in /= n;
  s.mean_out /= n;
  s.mean_delta /= n;
  return s;
}

inline std::string format_db(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline void write_report(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "id\tsi_sdr_in\tsi_sdr_out\tdelta\n";
  for (const auto& r : rows) {
    os << r.id << '\t' << format_db(r.si_sdr_in) << '\t' << format_db(r.si_sdr_out) << '\t'
       << format_db(r.delta()) << '\n';
  }
  const MetricSummary s = summarize(rows);
  os << "mean\t" << format_db(s.mean_in) << '\t' << format_db(s.mean_out) << '\t'
     << format_db(s.mean_delta) << '\n';
}

// Parses a report back into rows; the trailing mean row is checked, not kept.
inline std::vector<MetricRow> parse_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "id\tsi_sdr_in\tsi_sdr_out\tdelta") {
    throw DataError("metric report: missing header");
  }
  std::vector<MetricRow> rows;
  bool saw_mean = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricRow r;
    double delta = 0.0;
    if (!std::getline(ls, r.id, '\t') || !(ls >> r.si_sdr_in >> r.si_sdr_out >> delta)) {
      throw DataError("metric report: malformed row '" + line + "'");
    }
    if (r.id == "mean") {
      saw_mean = true;
      break;
    }
    rows.push_back(r);
  }
  if (!saw_mean) throw DataError("metric report: missing mean row");
  return rows;
}

}  // namespace tse::losses
