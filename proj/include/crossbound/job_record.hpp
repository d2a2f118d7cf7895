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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossbound/clock.hpp"
#include "crossbound/cluster_registry.hpp"
#include "crossbound/layout.hpp"
#include "crossbound/model.hpp"

namespace crossbound {

enum class JobState {
  Created,
  Validated,
  Reserved,
  Staged,
  Submitted,
  Running,
  RemoteComplete,
  Fetched,
  Notified,
  Failed,
  Cancelled,
};

/// Pipeline phase a failure is attributed to.
enum class Phase { Validate, Reserve, Stage, Submit, Poll, Proc, Fetch, Notify, Cancel };

std::string_view to_string(JobState s) noexcept;
std::string_view to_string(Phase p) noexcept;
JobState job_state_from_string(std::string_view s);
Phase phase_from_string(std::string_view s);

bool is_terminal(JobState s) noexcept;

/// Forward edges of CREATED→…→NOTIFIED, plus any non-terminal state to
/// FAILED or CANCELLED.
bool transition_allowed(JobState from, JobState to) noexcept;

struct OutputRecord {
  std::string name;
  std::string digest;
  std::uint64_t bytes = 0;

  friend bool operator==(const OutputRecord&, const OutputRecord&) = default;
};

struct PhaseDurations {
  std::optional<double> pre_proc_s;
  std::optional<double> proc_s;
  std::optional<double> post_proc_s;
};

struct JobRecord {
  std::string job_id;
  std::string group;
  JobSpec spec;
  JobState state = JobState::Created;
  std::optional<Phase> failure_phase;
  std::string failure_reason;

  std::string cluster_id;
  std::string account_id;
  std::string remote_job_id;
  std::vector<std::pair<JobState, Timestamp>> transitions;  // in order taken

  // bound while the job moves through the pipeline
  std::string tool_version;
  std::string container_digest;
  std::string script_digest;
  std::optional<StagedLayout> layout;
  std::optional<Reservation> reservation;
  std::optional<CoreSeconds> settled_charge;
  std::optional<int> exit_code;
  std::optional<Timestamp> remote_started;
  std::optional<Timestamp> remote_finished;
  std::vector<OutputRecord> outputs;
  bool workdir_removed = false;

  std::optional<Timestamp> entered(JobState s) const;

  /// pre: CREATED→SUBMITTED. proc: SUBMITTED→remote finish, where the remote
  /// finish is the accounting end time when the cluster reported one and the
  /// REMOTE_COMPLETE entry otherwise. post: remote finish→NOTIFIED.
  PhaseDurations phase_durations() const;
};

/// Requires the job to have reached FETCHED; WrongState otherwise.
ReproducibilityManifest manifest_of(const JobRecord& job);

}  // namespace crossbound
