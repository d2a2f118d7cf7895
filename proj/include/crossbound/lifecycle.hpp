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

#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "crossbound/cluster_registry.hpp"
#include "crossbound/codec.hpp"
#include "crossbound/job_record.hpp"
#include "crossbound/staging.hpp"
#include "crossbound/tool_registry.hpp"
#include "crossbound/transport.hpp"

namespace crossbound {

/// Append-only JSONL log per job under `<dir>/<job_id>.log`.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path dir, bool sync = true);

  void append(const std::string& job_id, const Json& event);
  /// Every job's events in file order. CorruptStore on a malformed line.
  std::map<std::string, std::vector<Json>> load_all() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  bool sync_;
};

struct Notification {
  Timestamp at = 0;
  std::string job_id;
  JobState state = JobState::Notified;
  std::optional<int> exit_code;
  std::string recipient;
};

/// `<iso8601> <job_id> <state>[ <exit_code>]`
std::string format_notification(const Notification& n);

/// Sinks drop repeats of a job id they have already delivered, so callers may
/// deliver at-least-once.
class NotificationSink {
 public:
  enum class Kind { File, Stdout, Custom };
  virtual ~NotificationSink() = default;
  virtual Kind kind() const = 0;
  void deliver(const Notification& n);
  bool delivered(const std::string& job_id) const;

 protected:
  virtual void write(const Notification& n) = 0;
  void mark(const std::string& job_id);

 private:
  mutable std::mutex mutex_;
  std::set<std::string> seen_;
};

class FileSink final : public NotificationSink {
 public:
  /// Job ids already present in the file count as delivered.
  explicit FileSink(std::filesystem::path path);
  Kind kind() const override { return Kind::File; }

 protected:
  void write(const Notification& n) override;

 private:
  std::filesystem::path path_;
};

class StreamSink final : public NotificationSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}
  Kind kind() const override { return Kind::Stdout; }

 protected:
  void write(const Notification& n) override { out_ << format_notification(n) << '\n' << std::flush; }

 private:
  std::ostream& out_;
};

class CallbackSink final : public NotificationSink {
 public:
  explicit CallbackSink(std::function<void(const Notification&)> fn) : fn_(std::move(fn)) {}
  Kind kind() const override { return Kind::Custom; }

 protected:
  void write(const Notification& n) override { fn_(n); }

 private:
  std::function<void(const Notification&)> fn_;
};

class Executor {
 public:
  virtual ~Executor() = default;
  virtual void post(std::function<void()> task) = 0;
  /// Blocks until every posted task finished; rethrows the first task failure.
  virtual void drain() = 0;
};

/// Runs each task on the caller's thread before post() returns.
class InlineExecutor final : public Executor {
 public:
  void post(std::function<void()> task) override { task(); }
  void drain() override {}
};

class ThreadPoolExecutor final : public Executor {
 public:
  explicit ThreadPoolExecutor(unsigned threads);
  ~ThreadPoolExecutor() override;

  void post(std::function<void()> task) override;
  void drain() override;

 private:
  void run();

  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<std::function<void()>> queue_;
  unsigned busy_ = 0;
  bool stop_ = false;
  std::exception_ptr failure_;
  std::vector<std::thread> workers_;
};

/// Robot-account credentials by cluster id.
class CredentialStore {
 public:
  void set(const std::string& cluster_id, Credential credential);
  std::optional<Credential> get(const std::string& cluster_id) const;
  Json to_json() const;
  /// Adds every entry of a to_json() document.
  void load(const Json& j);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Credential> entries_;
};

/// Thrown by a crash hook to abandon the broker mid-operation. Deliberately
/// not an Error so no pipeline step catches it.
struct SimulatedCrash {
  std::string job_id;
  std::size_t event_index = 0;
};

struct BrokerOptions {
  Timestamp poll_interval = seconds(600);
  unsigned max_poll_failures = 3;
  unsigned fetch_retries = 3;
  Timestamp fetch_retry_spacing = seconds(30);
  bool sync_writes = true;
  /// Runs after every event append, with the job's event count so far.
  std::function<void(const std::string& job_id, std::size_t event_index, const Json& event)> after_append;
};

struct BrokerDeps {
  ToolRegistry& tools;
  ClusterRegistry& clusters;
  TransportBackend& backend;
  const CredentialStore& credentials;
  const ArtifactStore& artifacts;
  TransferLog& transfers;
  Clock& clock;
  Executor& executor;
  std::map<std::string, ObjectStoreEndpoint> endpoints;
  std::vector<NotificationSink*> sinks;
};

struct StateChange {
  std::string job_id;
  JobState from = JobState::Created;
  JobState to = JobState::Created;
  Timestamp at = 0;
};

/// Drives jobs through validate, reserve, stage, submit, poll, fetch, settle,
/// gc and notify. Every step is persisted before the next one starts so
/// recover() can pick up after a crash.
class Broker {
 public:
  Broker(BrokerDeps deps, std::filesystem::path state_dir, BrokerOptions options = {});
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Assigns the job id, persists CREATED and hands the pipeline to the
  /// executor. Only persistence problems throw; everything else ends in FAILED.
  std::string submit_job(JobSpec spec, const std::string& group);

  std::vector<StateChange> poll_once();
  void cancel(const std::string& job_id);
  JobRecord status(const std::string& job_id) const;
  std::vector<JobRecord> jobs() const;

  /// Replays every job log, rebuilds the quota ledger and resumes unfinished
  /// work. CorruptStore if any log does not replay.
  void recover();

  /// Next poll tick strictly after `t` on the poll_interval grid.
  Timestamp next_tick(Timestamp t) const;
  /// Earliest of the next tick and any scheduled fetch retry.
  Timestamp next_due() const;

  std::filesystem::path results_dir(const std::string& job_id) const;
  const BrokerOptions& options() const { return options_; }

 private:
  struct Entry {
    mutable std::mutex mutex;
    JobRecord record;
    std::size_t events = 0;
    unsigned poll_failures = 0;
    unsigned fetch_attempts = 0;
    std::optional<Timestamp> next_fetch_at;
    std::optional<std::pair<Phase, std::string>> failing;
    bool cancelling = false;
  };

  Entry& entry(const std::string& job_id) const;
  void append(Entry& e, Json event);
  Timestamp stamp(Entry& e);
  void transition(Entry& e, JobState to, Json payload = Json::object());

  void advance(const std::string& job_id);
  bool step(Entry& e);
  void do_validate(Entry& e);
  void do_reserve(Entry& e);
  void do_stage(Entry& e);
  void do_submit(Entry& e);

  enum class PollOutcome { Unchanged, Changed, Finished, RemoteFailed };
  PollOutcome poll_job(Entry& e, TransportSession* session, const std::string& connect_error);
  void complete(Entry& e);
  bool try_fetch(Entry& e);
  void settle(Entry& e);
  void gc(Entry& e);
  void notify(Entry& e, JobState state);
  void start_failure(Entry& e, Phase phase, const std::string& reason);
  void finish_failure(Entry& e);
  void finish_cancel(Entry& e);
  std::uint64_t charged_runtime_s(const JobRecord& r) const;

  std::unique_ptr<TransportSession> open_session(const std::string& cluster_id);
  ValidatedJob revalidate(const JobRecord& r) const;

  void replay(const std::string& job_id, const std::vector<Json>& events, Entry& e) const;

  BrokerDeps deps_;
  std::filesystem::path state_dir_;
  BrokerOptions options_;
  EventStore store_;
  BundleLocks bundle_locks_;

  mutable std::shared_mutex jobs_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> jobs_;
  std::uint64_t next_seq_ = 1;
};

}  // namespace crossbound
