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

#include "crossbound/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/lifecycle.hpp"
#include "crossbound/simcluster.hpp"

namespace crossbound {
namespace fs = std::filesystem;
using namespace json_detail;

BenchConfig bench_config_from_json(const Json& j) {
  expect_keys(j, "benchfile", {"poll_interval_s", "seed", "link", "runtime_table", "workloads"});
  BenchConfig c;
  try {
    if (j.contains("poll_interval_s")) c.poll_interval_s = static_cast<std::int64_t>(get_uint(j, "benchfile", "poll_interval_s"));
    if (j.contains("seed")) c.seed = get_uint(j, "benchfile", "seed");
    if (j.contains("link")) {
      const Json& l = j["link"];
      expect_keys(l, "link", {"latency_ms", "bytes_per_second"});
      if (l.contains("latency_ms")) c.link.latency = static_cast<Timestamp>(std::llround(l["latency_ms"].get<double>() * 1000));
      if (l.contains("bytes_per_second")) c.link.bytes_per_second = l["bytes_per_second"].get<double>();
    }
    for (const auto& pt : require(j, "benchfile", "runtime_table")) {
      if (!pt.is_array() || pt.size() != 2) fail(ErrorCode::InvalidArgument, "runtime_table entries are [records, minutes]");
      c.runtime_table.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    for (const auto& w : require(j, "benchfile", "workloads")) {
      expect_keys(w, "workload", {"records", "size_kb"});
      c.workloads.push_back({get_uint(w, "workload", "records"), require(w, "workload", "size_kb").get<double>()});
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("benchfile: ") + e.what());
  }
  if (c.poll_interval_s <= 0) fail(ErrorCode::InvalidArgument, "poll_interval_s must be positive");
  if (c.link.latency < 0 || c.link.bytes_per_second < 0) fail(ErrorCode::InvalidArgument, "link costs must be >= 0");
  for (const auto& w : c.workloads) {
    if (!(w.size_kb >= 0)) fail(ErrorCode::InvalidArgument, "size_kb must be >= 0");
  }
  RuntimeModel table;
  table.kind = RuntimeModel::Kind::Table;
  table.table = c.runtime_table;
  table.validate();
  return c;
}

static std::int64_t floor_minutes(double s) { return static_cast<std::int64_t>(std::floor(s / 60.0)); }

std::int64_t BenchRow::pre_proc_min() const { return floor_minutes(pre_proc_s); }
std::int64_t BenchRow::proc_min() const { return floor_minutes(proc_s); }
std::int64_t BenchRow::post_proc_min() const { return floor_minutes(post_proc_s); }

namespace {

constexpr const char* kCluster = "bench";
constexpr const char* kGroup = "bench";

ToolDescriptor bench_tool(const std::string& container_digest) {
  ToolDescriptor t;
  t.tool_id = "shmatch";
  t.version = "1.0";
  t.container_image = "bench/shmatch:1.0";
  t.container_digest = container_digest;
  t.command_template = "shmatch --records {param:records} --in {input:reads} --out {output:matches.txt}";
  t.declared_inputs = {{"reads", DataKind::Inline}};
  t.declared_params = {{"records", std::nullopt}};
  t.declared_outputs = {"matches.txt"};
  t.default_resources = {1, 4096, 0, 24 * 3600};
  return t;
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string out(n, '\0');
  std::size_t i = 0;
  while (i < n) {
    std::uint64_t word = rng();
    for (int b = 0; b < 8 && i < n; ++b, ++i) out[i] = static_cast<char>((word >> (8 * b)) & 0xff);
  }
  return out;
}

}  // namespace

BenchReport run_bench(const BenchConfig& config, const fs::path& work_root) {
  fs::create_directories(work_root);
  VirtualClock clock(config.start);

  ArtifactStore artifacts(work_root / "artifacts");
  std::string container = artifacts.put("crossbound bench container image\n");
  ToolRegistry tools(&clock);
  tools.install(bench_tool(container));

  ClusterRegistry clusters;
  ClusterProfile profile;
  profile.cluster_id = kCluster;
  profile.endpoint = "sim://" + (work_root / "remote").string();
  profile.scratch_root = "/scratch";
  profile.capabilities = {64, 256 * 1024, 0, 7 * 24 * 3600};
  clusters.add_cluster(profile);
  RobotAccount account;
  account.account_id = "bench-robot";
  account.cluster_id = kCluster;
  account.user_group = kGroup;
  account.quota.budget = from_core_hours(1e6);
  account.quota.max_concurrent_jobs = 4;
  account.valid_from = 0;
  account.valid_until = config.start + seconds(10LL * 365 * 24 * 3600);
  clusters.add_account(account);

  CredentialStore credentials;
  credentials.set(kCluster, Credential{AuthMode::Key, "bench-key", std::nullopt});

  LocalBackend backend(work_root / "remote");
  SimClusterConfig sim_config;
  sim_config.cluster_id = kCluster;
  sim_config.slots = 1;
  sim_config.runtime.kind = RuntimeModel::Kind::Table;
  sim_config.runtime.table = config.runtime_table;
  SimCluster sim(sim_config, backend.fs_for(kCluster), clock);
  backend.set_handler(kCluster, &sim);
  backend.set_link(kCluster, config.link, &clock);

  TransferLog transfers;
  InlineExecutor executor;
  BrokerOptions options;
  options.poll_interval = seconds(config.poll_interval_s);
  options.sync_writes = false;
  Broker broker(BrokerDeps{tools, clusters, backend, credentials, artifacts, transfers, clock, executor, {}, {}},
                work_root / "state", options);

  std::vector<BenchWorkload> workloads = config.workloads;
  std::stable_sort(workloads.begin(), workloads.end(),
                   [](const BenchWorkload& a, const BenchWorkload& b) { return a.records < b.records; });

  std::mt19937_64 rng(config.seed);
  fs::create_directories(work_root / "inputs");
  BenchReport report;
  for (const auto& w : workloads) {
    auto size = static_cast<std::size_t>(std::llround(w.size_kb * 1000));
    std::string bytes = random_bytes(rng, size);
    fs::path input = work_root / "inputs" / fmt::format("{}.dat", w.records);
    std::ofstream(input, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

    JobSpec spec;
    spec.tool_id = "shmatch";
    spec.tool_version = "1.0";
    DataRef reads;
    reads.name = "reads";
    reads.kind = DataKind::Inline;
    reads.local_path = input.string();
    reads.size_bytes = bytes.size();
    reads.digest = sha256_hex(bytes);
    spec.inputs.push_back(reads);
    spec.parameters.push_back({"records", std::to_string(w.records)});

    std::string id = broker.submit_job(spec, kGroup);
    JobRecord rec = broker.status(id);
    // bounded so a stuck pipeline surfaces as an error instead of a hang
    for (int i = 0; i < 100'000 && !is_terminal(rec.state); ++i) {
      clock.advance_to(broker.next_due());
      broker.poll_once();
      rec = broker.status(id);
    }
    std::string what = fmt::format("workload {} records / {} kB", w.records, w.size_kb);
    if (rec.state != JobState::Notified) {
      fail(ErrorCode::RemoteIOError, what + " ended " + std::string(to_string(rec.state)) +
                                         (rec.failure_phase ? " in " + std::string(to_string(*rec.failure_phase)) : "") +
                                         (rec.failure_reason.empty() ? "" : ": " + rec.failure_reason));
    }
    PhaseDurations d = rec.phase_durations();
    BenchRow row;
    row.records = w.records;
    row.size_kb = w.size_kb;
    row.pre_proc_s = d.pre_proc_s.value_or(0);
    row.proc_s = d.proc_s.value_or(0);
    row.post_proc_s = d.post_proc_s.value_or(0);
    Timestamp complete = *rec.entered(JobState::RemoteComplete);
    Timestamp notified = *rec.entered(JobState::Notified);
    row.detection_s = rec.remote_finished ? to_seconds(complete - *rec.remote_finished) : 0;
    row.fetch_s = to_seconds(notified - complete);
    row.elapsed_s = to_seconds(notified - *rec.entered(JobState::Created));
    row.job_id = id;
    report.rows.push_back(row);
  }
  return report;
}

std::string render_report(const BenchReport& report) {
  std::string out = fmt::format("{:>7} {:>10} {:>4} {:>5} {:>5}\n", "RECORDS", "SIZE_KB", "PRE", "PROC", "POST");
  for (const auto& r : report.rows) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, r.size_kb);
    out += fmt::format("{:>7} {:>10} {:>4} {:>5} {:>5}\n", r.records, std::string_view(buf, res.ptr - buf),
                       r.pre_proc_min(), r.proc_min(), r.post_proc_min());
  }
  return out;
}

}  // namespace crossbound
