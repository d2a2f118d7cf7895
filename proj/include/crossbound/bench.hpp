// Copyright 2026 The crossbound Authors
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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crossbound/codec.hpp"
#include "crossbound/transport.hpp"

namespace crossbound {

struct BenchWorkload {
  std::uint64_t records = 0;
  double size_kb = 0;  // kB of 1000 bytes
};

struct BenchConfig {
  std::int64_t poll_interval_s = 600;
  std::uint64_t seed = 1;
  LinkModel link{50'000, 12.5e6};
  std::vector<std::pair<double, double>> runtime_table;  // (records, proc minutes)
  std::vector<BenchWorkload> workloads;
  Timestamp start = seconds(1'767'225'600);  // 2026-01-01T00:00:00Z
};

BenchConfig bench_config_from_json(const Json& j);

struct BenchRow {
  std::uint64_t records = 0;
  double size_kb = 0;
  double pre_proc_s = 0;
  double proc_s = 0;
  double post_proc_s = 0;
  double detection_s = 0;  // remote finish to REMOTE_COMPLETE
  double fetch_s = 0;      // REMOTE_COMPLETE to NOTIFIED
  double elapsed_s = 0;    // CREATED to NOTIFIED
  std::string job_id;

  std::int64_t pre_proc_min() const;
  std::int64_t proc_min() const;
  std::int64_t post_proc_min() const;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // ascending records
};

/// Runs every workload end to end, one after another, against a simulated
/// cluster on a virtual clock. Scratch state goes under `work_root`.
BenchReport run_bench(const BenchConfig& config, const std::filesystem::path& work_root);

/// Fixed-width `RECORDS SIZE_KB PRE PROC POST` table, minutes floor-rounded.
std::string render_report(const BenchReport& report);

}  // namespace crossbound
