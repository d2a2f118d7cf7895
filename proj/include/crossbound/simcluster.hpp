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
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crossbound/batchgen.hpp"
#include "crossbound/clock.hpp"
#include "crossbound/codec.hpp"
#include "crossbound/transport.hpp"

namespace crossbound {

/// How long a simulated job runs. FIXED looks the tool up in `per_tool_s`
/// and falls back to `fixed_s`; TABLE interpolates proc minutes linearly on
/// the job's `records` parameter and clamps outside the outermost points.
struct RuntimeModel {
  enum class Kind { Fixed, Table };
  Kind kind = Kind::Fixed;
  double fixed_s = 60;
  std::map<std::string, double> per_tool_s;
  std::vector<std::pair<double, double>> table;  // (records, minutes), strictly increasing records

  void validate() const;
  /// InvalidArgument when a TABLE model meets a job without a numeric `records`.
  Timestamp runtime_for(const JobContext& job) const;
};

/// Forces `exit_code` on jobs whose tool id, job name or named parameter
/// equals `value`. The first matching rule wins.
struct FailureRule {
  enum class Field { ToolId, JobName, Param };
  Field field = Field::ToolId;
  std::string param;
  std::string value;
  int exit_code = 1;
};

struct SimClusterConfig {
  std::string cluster_id;
  unsigned slots = 1;
  RuntimeModel runtime;
  std::vector<FailureRule> failures;
};

Json to_json(const SimClusterConfig& c);
SimClusterConfig sim_config_from_json(const Json& j);

enum class SimState { Pending, Running, Completed, Failed, Cancelled };
std::string_view to_string(SimState s) noexcept;

struct SimJob {
  std::string remote_job_id;
  std::string script;
  std::string job_name;
  std::string work_dir;
  SimState state = SimState::Pending;
  Timestamp submitted = 0;
  Timestamp runtime = 0;
  std::uint64_t walltime_s = 0;
  std::optional<int> forced_exit;
  std::optional<Timestamp> started;
  std::optional<Timestamp> finished;
  std::optional<int> exit_code;
};

struct SimEvent {
  Timestamp at = 0;
  std::string remote_job_id;
  SimState state = SimState::Running;

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

/// Output bytes of the simulated tool: a keyed hash chain over tool
/// identity, the sorted (name, digest) pairs of the staged inputs and the
/// parameters in order, finished per output name.
std::string simulated_output(const std::string& tool_id, const std::string& tool_version, const DigestList& inputs,
                             const std::vector<Parameter>& parameters, const std::string& output_name);

/// Discrete-event stand-in for a SLURM-like cluster behind a LocalBackend
/// sandbox. Events are applied lazily up to the clock's current time on every
/// call, so it works under a VirtualClock as well as a SystemClock.
class SimCluster final : public CommandHandler {
 public:
  SimCluster(SimClusterConfig config, RemoteFs sandbox, Clock& clock);

  std::optional<CommandResult> handle(const std::vector<std::string>& argv) override;

  /// MalformedDirective if the script does not parse; InvalidArgument if the
  /// job context next to it is missing or unusable.
  std::string sbatch(std::string_view script);
  SimJob squeue(const std::string& remote_job_id);
  void scancel(const std::string& remote_job_id);

  std::vector<SimEvent> process_until(Timestamp t);
  /// Only for a VirtualClock; InvalidArgument otherwise.
  std::vector<SimEvent> advance_clock(std::int64_t seconds);

  std::vector<SimJob> jobs() const;
  std::vector<SimJob> active_jobs() const;
  unsigned running_count() const;
  const SimClusterConfig& config() const { return config_; }

  Json state_to_json() const;
  void load_state(const Json& j);

 private:
  std::vector<SimEvent> process_locked(Timestamp t);
  void start_pending(Timestamp at, std::vector<SimEvent>& events);
  void finish(SimJob& job, std::vector<SimEvent>& events);
  int execute(const SimJob& job);
  SimJob& find(const std::string& id);
  std::optional<CommandResult> fetch_object(const std::vector<std::string>& argv);

  SimClusterConfig config_;
  RemoteFs sandbox_;
  Clock& clock_;
  mutable std::mutex mutex_;
  std::vector<SimJob> jobs_;  // submission order is FIFO order
  std::uint64_t next_id_ = 1000;
};

}  // namespace crossbound
