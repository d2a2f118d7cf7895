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

// Shared fixture: a broker wired to simulated clusters on a virtual clock,
// everything under a throwaway directory.
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "crossbound/digest.hpp"
#include "crossbound/lifecycle.hpp"
#include "crossbound/simcluster.hpp"

namespace crossbound::testing {

namespace fs = std::filesystem;

inline constexpr Timestamp kEpoch = seconds(1'767'225'600);  // 2026-01-01T00:00:00Z

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("crossbound-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline RuntimeModel fixed_runtime(double s) {
  RuntimeModel m;
  m.kind = RuntimeModel::Kind::Fixed;
  m.fixed_s = s;
  return m;
}

class World {
 public:
  World()
      : artifacts(tmp.path() / "artifacts"),
        tools(&clock),
        clusters(std::make_unique<ClusterRegistry>()),
        backend(tmp.path() / "remote"),
        sink([this](const Notification& n) { notifications.push_back(n); }) {
    container = artifacts.put("align container image v1\n");
    bundle = artifacts.put("reference sequence database\n");
  }

  fs::path state_dir() const { return tmp.path() / "state"; }

  ClusterProfile add_cluster(const std::string& id, unsigned slots = 4, RuntimeModel runtime = fixed_runtime(1800),
                             AuthMode mode = AuthMode::Key, std::uint32_t gpus = 0,
                             std::vector<FailureRule> failures = {}) {
    ClusterProfile p;
    p.cluster_id = id;
    p.endpoint = "sim://" + id;
    p.auth_mode = mode;
    p.scratch_root = "/scratch";
    p.capabilities = {32, 128 * 1024, gpus, 48 * 3600};
    clusters->add_cluster(p);
    SimClusterConfig sc;
    sc.cluster_id = id;
    sc.slots = slots;
    sc.runtime = std::move(runtime);
    sc.failures = std::move(failures);
    sims[id] = std::make_unique<SimCluster>(sc, backend.fs_for(id), clock);
    backend.set_handler(id, sims[id].get());
    credentials.set(id, Credential{mode, "robot@" + id, std::nullopt});
    return p;
  }

  RobotAccount add_account(const std::string& id, const std::string& cluster, const std::string& group,
                           double budget_h = 1000, std::uint32_t max_jobs = 8) {
    RobotAccount a;
    a.account_id = id;
    a.cluster_id = cluster;
    a.user_group = group;
    a.quota.budget = from_core_hours(budget_h);
    a.quota.max_concurrent_jobs = max_jobs;
    a.valid_from = kEpoch - seconds(86400);
    a.valid_until = kEpoch + seconds(400LL * 86400);
    clusters->add_account(a);
    return a;
  }

  ToolDescriptor align_tool(const std::string& version = "1.0") const {
    ToolDescriptor t;
    t.tool_id = "align";
    t.version = version;
    t.container_image = "example/align:" + version;
    t.container_digest = container;
    t.command_template = "align -i {input:reads} -d {input:db} -m {param:mode} -o {output:aligned.txt}";
    t.declared_inputs = {{"reads", DataKind::Inline}, {"db", DataKind::ReferenceBundle}};
    t.declared_params = {{"mode", std::string("fast")}};
    t.declared_outputs = {"aligned.txt"};
    t.default_resources = {2, 1024, 0, 7200};
    t.reference_bundles = {bundle};
    return t;
  }

  fs::path write_input(const std::string& name, const std::string& bytes) {
    fs::path p = tmp.path() / "inputs" / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << bytes;
    return p;
  }

  JobSpec align_spec(const std::string& reads, const std::string& mode = "fast", const std::string& version = "") {
    fs::path p = write_input(sha256_hex(reads).substr(0, 16) + ".fa", reads);
    JobSpec s;
    s.tool_id = "align";
    s.tool_version = version;
    DataRef in;
    in.name = "reads";
    in.kind = DataKind::Inline;
    in.local_path = p.string();
    in.size_bytes = reads.size();
    in.digest = sha256_hex(reads);
    DataRef db;
    db.name = "db";
    db.kind = DataKind::ReferenceBundle;
    db.digest = bundle;
    s.inputs = {in, db};
    s.parameters = {{"mode", mode}};
    s.notify_to = "group@example.org";
    return s;
  }

  Broker& start(BrokerOptions options = {}, Executor* executor = nullptr) {
    options.sync_writes = false;
    broker = std::make_unique<Broker>(
        BrokerDeps{tools, *clusters, backend, credentials, artifacts, transfers, clock,
                   executor != nullptr ? *executor : inline_executor, endpoints, {&sink}},
        state_dir(), options);
    return *broker;
  }

  /// Drops the broker and the in-memory ledger as a process exit would, then
  /// rebuilds both from configuration and the job logs.
  Broker& restart(BrokerOptions options = {}, Executor* executor = nullptr) {
    broker.reset();
    Json config = clusters->to_json();
    clusters = std::make_unique<ClusterRegistry>();
    ClusterRegistry::load_into(*clusters, config);
    Broker& b = start(std::move(options), executor);
    b.recover();
    return b;
  }

  bool all_terminal() const {
    for (const auto& r : broker->jobs()) {
      if (!is_terminal(r.state)) return false;
    }
    return true;
  }

  /// Advances the virtual clock from due time to due time, polling, until
  /// every job is terminal or `max_steps` polls were made.
  void run_until_idle(int max_steps = 10'000) {
    for (int i = 0; i < max_steps && !all_terminal(); ++i) {
      clock.advance_to(broker->next_due());
      broker->poll_once();
    }
  }

  TempDir tmp;
  VirtualClock clock{kEpoch};
  ArtifactStore artifacts;
  ToolRegistry tools;
  std::unique_ptr<ClusterRegistry> clusters;
  CredentialStore credentials;
  LocalBackend backend;
  TransferLog transfers;
  InlineExecutor inline_executor;
  std::map<std::string, std::unique_ptr<SimCluster>> sims;
  std::map<std::string, ObjectStoreEndpoint> endpoints;
  std::vector<Notification> notifications;
  CallbackSink sink;
  std::unique_ptr<Broker> broker;
  std::string container;
  std::string bundle;
};

}  // namespace crossbound::testing
