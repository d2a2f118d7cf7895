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

#include "crossbound/job_record.hpp"

#include <algorithm>

#include "crossbound/error.hpp"

namespace crossbound {

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::Created: return "CREATED";
    case JobState::Validated: return "VALIDATED";
    case JobState::Reserved: return "RESERVED";
    case JobState::Staged: return "STAGED";
    case JobState::Submitted: return "SUBMITTED";
    case JobState::Running: return "RUNNING";
    case JobState::RemoteComplete: return "REMOTE_COMPLETE";
    case JobState::Fetched: return "FETCHED";
    case JobState::Notified: return "NOTIFIED";
    case JobState::Failed: return "FAILED";
    case JobState::Cancelled: return "CANCELLED";
  }
  return "CREATED";
}

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::Validate: return "VALIDATE";
    case Phase::Reserve: return "RESERVE";
    case Phase::Stage: return "STAGE";
    case Phase::Submit: return "SUBMIT";
    case Phase::Poll: return "POLL";
    case Phase::Proc: return "PROC";
    case Phase::Fetch: return "FETCH";
    case Phase::Notify: return "NOTIFY";
    case Phase::Cancel: return "CANCEL";
  }
  return "VALIDATE";
}

JobState job_state_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(JobState::Cancelled); ++i) {
    auto st = static_cast<JobState>(i);
    if (to_string(st) == s) return st;
  }
  fail(ErrorCode::CorruptStore, "unknown job state '" + std::string(s) + "'");
}

Phase phase_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Phase::Cancel); ++i) {
    auto p = static_cast<Phase>(i);
    if (to_string(p) == s) return p;
  }
  fail(ErrorCode::CorruptStore, "unknown phase '" + std::string(s) + "'");
}

bool is_terminal(JobState s) noexcept {
  return s == JobState::Notified || s == JobState::Failed || s == JobState::Cancelled;
}

bool transition_allowed(JobState from, JobState to) noexcept {
  if (is_terminal(from)) return false;
  if (to == JobState::Failed || to == JobState::Cancelled) return true;
  return static_cast<int>(to) == static_cast<int>(from) + 1 && to <= JobState::Notified;
}

std::optional<Timestamp> JobRecord::entered(JobState s) const {
  for (const auto& [state, at] : transitions) {
    if (state == s) return at;
  }
  return std::nullopt;
}

PhaseDurations JobRecord::phase_durations() const {
  PhaseDurations d;
  auto created = entered(JobState::Created);
  auto submitted = entered(JobState::Submitted);
  auto complete = entered(JobState::RemoteComplete);
  auto notified = entered(JobState::Notified);
  if (created && submitted) d.pre_proc_s = to_seconds(*submitted - *created);
  if (submitted && complete) {
    Timestamp finish = *complete;
    if (remote_finished) finish = std::clamp(*remote_finished, *submitted, *complete);
    d.proc_s = to_seconds(finish - *submitted);
    if (notified) d.post_proc_s = to_seconds(*notified - finish);
  }
  return d;
}

ReproducibilityManifest manifest_of(const JobRecord& job) {
  if (!job.entered(JobState::Fetched)) {
    fail(ErrorCode::WrongState, "job " + job.job_id + " is " + std::string(to_string(job.state)) + "; outputs not fetched");
  }
  ReproducibilityManifest m;
  m.job_id = job.job_id;
  m.cluster_id = job.cluster_id;
  m.tool_id = job.spec.tool_id;
  m.tool_version = job.tool_version;
  m.container_digest = job.container_digest;
  if (job.layout) {
    for (const auto& [name, digest] : job.layout->digests) m.input_digests.emplace_back(name, digest);
  }
  m.script_digest = job.script_digest;
  m.exit_code = job.exit_code.value_or(0);
  for (const auto& o : job.outputs) m.output_digests.emplace_back(o.name, o.digest);
  std::sort(m.input_digests.begin(), m.input_digests.end());
  std::sort(m.output_digests.begin(), m.output_digests.end());
  return m;
}

}  // namespace crossbound
