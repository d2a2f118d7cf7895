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

#include "crossbound/lifecycle.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "crossbound/batchgen.hpp"
#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/validate.hpp"

namespace crossbound {
namespace fs = std::filesystem;

// ---- event store ----

EventStore::EventStore(fs::path dir, bool sync) : dir_(std::move(dir)), sync_(sync) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) fail(ErrorCode::Persistence, "cannot create " + dir_.string() + ": " + ec.message());
}

void EventStore::append(const std::string& job_id, const Json& event) {
  std::string line = event.dump() + "\n";
  fs::path file = dir_ / (job_id + ".log");
  int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::Persistence, file.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < line.size()) {
    ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      fail(ErrorCode::Persistence, file.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (sync_ && ::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    fail(ErrorCode::Persistence, file.string() + ": fsync: " + std::strerror(err));
  }
  ::close(fd);
}

std::map<std::string, std::vector<Json>> EventStore::load_all() const {
  std::map<std::string, std::vector<Json>> out;
  for (const auto& item : fs::directory_iterator(dir_)) {
    if (!item.is_regular_file() || item.path().extension() != ".log") continue;
    std::ifstream in(item.path());
    std::string line;
    std::size_t lineno = 0;
    auto& events = out[item.path().stem().string()];
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        Json event = Json::parse(line);
        if (!event.is_object()) throw std::runtime_error("not an object");
        events.push_back(std::move(event));
      } catch (const std::exception& e) {
        fail(ErrorCode::CorruptStore, fmt::format("{}:{}: {}", item.path().string(), lineno, e.what()));
      }
    }
  }
  return out;
}

// ---- notifications ----

std::string format_notification(const Notification& n) {
  std::string line = format_iso8601(n.at) + " " + n.job_id + " " + std::string(to_string(n.state));
  if (n.exit_code) line += " " + std::to_string(*n.exit_code);
  return line;
}

void NotificationSink::deliver(const Notification& n) {
  std::lock_guard lock(mutex_);
  if (seen_.count(n.job_id) != 0) return;
  write(n);
  seen_.insert(n.job_id);
}

bool NotificationSink::delivered(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  return seen_.count(job_id) != 0;
}

void NotificationSink::mark(const std::string& job_id) {
  std::lock_guard lock(mutex_);
  seen_.insert(job_id);
}

FileSink::FileSink(fs::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string at, job_id;
    if (fields >> at >> job_id) mark(job_id);
  }
}

void FileSink::write(const Notification& n) {
  std::ofstream out(path_, std::ios::app);
  out << format_notification(n) << '\n';
  out.flush();
  if (!out) fail(ErrorCode::Persistence, "cannot append to " + path_.string());
}

// ---- executors ----

ThreadPoolExecutor::ThreadPoolExecutor(unsigned threads) {
  if (threads == 0) threads = 1;
  for (unsigned i = 0; i < threads; ++i) workers_.emplace_back([this] { run(); });
}

ThreadPoolExecutor::~ThreadPoolExecutor() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : workers_) t.join();
}

void ThreadPoolExecutor::post(std::function<void()> task) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(task));
  }
  wake_.notify_one();
}

void ThreadPoolExecutor::drain() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return queue_.empty() && busy_ == 0; });
  if (failure_) std::rethrow_exception(std::exchange(failure_, nullptr));
}

void ThreadPoolExecutor::run() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      ++busy_;
    }
    try {
      task();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!failure_) failure_ = std::current_exception();
    }
    {
      std::lock_guard lock(mutex_);
      --busy_;
    }
    idle_.notify_all();
  }
}

// ---- credentials ----

void CredentialStore::set(const std::string& cluster_id, Credential credential) {
  std::lock_guard lock(mutex_);
  entries_[cluster_id] = std::move(credential);
}

std::optional<Credential> CredentialStore::get(const std::string& cluster_id) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(cluster_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Json CredentialStore::to_json() const {
  std::lock_guard lock(mutex_);
  Json j = Json::object();
  for (const auto& [id, c] : entries_) j[id] = crossbound::to_json(c);
  return j;
}

void CredentialStore::load(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "credentials must be an object");
  for (const auto& [id, c] : j.items()) set(id, credential_from_json(c));
}

// ---- broker ----

namespace {

std::uint64_t job_seq(const std::string& job_id) {
  if (job_id.size() < 2 || job_id[0] != 'j') return 0;
  std::uint64_t n = 0;
  for (char c : job_id.substr(1)) {
    if (c < '0' || c > '9') return 0;
    n = n * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return n;
}

// "<id> <STATE> <start|-> <end|->"
void read_sacct(TransportSession& session, JobRecord& r) {
  auto res = session.exec_command("sacct " + r.remote_job_id);
  if (res.exit_code != 0) return;
  auto f = split_command(res.out);
  if (f.size() != 4) return;
  try {
    if (f[2] != "-") r.remote_started = std::stoll(f[2]);
    if (f[3] != "-") r.remote_finished = std::stoll(f[3]);
  } catch (const std::exception&) {
    r.remote_started.reset();
    r.remote_finished.reset();
  }
}

Json remote_times(const JobRecord& r) {
  Json j = Json::object();
  if (r.exit_code) j["exit_code"] = *r.exit_code;
  if (r.remote_started) j["remote_started"] = *r.remote_started;
  if (r.remote_finished) j["remote_finished"] = *r.remote_finished;
  return j;
}

void apply_remote_times(const Json& j, JobRecord& r) {
  if (j.contains("exit_code")) r.exit_code = j["exit_code"].get<int>();
  if (j.contains("remote_started")) r.remote_started = j["remote_started"].get<Timestamp>();
  if (j.contains("remote_finished")) r.remote_finished = j["remote_finished"].get<Timestamp>();
}

}  // namespace

Broker::Broker(BrokerDeps deps, fs::path state_dir, BrokerOptions options)
    : deps_(std::move(deps)),
      state_dir_(std::move(state_dir)),
      options_(std::move(options)),
      store_(state_dir_ / "jobs", options_.sync_writes) {
  if (options_.poll_interval <= 0) fail(ErrorCode::InvalidArgument, "poll interval must be positive");
  if (options_.max_poll_failures == 0) fail(ErrorCode::InvalidArgument, "max poll failures must be positive");
}

Broker::Entry& Broker::entry(const std::string& job_id) const {
  std::shared_lock lock(jobs_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) fail(ErrorCode::UnknownJob, job_id);
  return *it->second;
}

void Broker::append(Entry& e, Json event) {
  store_.append(e.record.job_id, event);
  ++e.events;
  if (options_.after_append) options_.after_append(e.record.job_id, e.events, event);
}

Timestamp Broker::stamp(Entry& e) {
  Timestamp t = deps_.clock.now();
  if (!e.record.transitions.empty()) t = std::max(t, e.record.transitions.back().second + 1);
  return t;
}

void Broker::transition(Entry& e, JobState to, Json payload) {
  if (!transition_allowed(e.record.state, to)) {
    fail(ErrorCode::WrongState, fmt::format("{}: {} -> {} not allowed", e.record.job_id, to_string(e.record.state),
                                            to_string(to)));
  }
  Timestamp at = stamp(e);
  Json event{{"type", "transition"}, {"to", to_string(to)}, {"at", at}};
  event.update(payload);
  append(e, std::move(event));
  e.record.state = to;
  e.record.transitions.emplace_back(to, at);
}

std::string Broker::submit_job(JobSpec spec, const std::string& group) {
  std::string job_id;
  Entry* e;
  {
    std::unique_lock lock(jobs_mutex_);
    job_id = fmt::format("j{:06d}", next_seq_++);
    auto owned = std::make_unique<Entry>();
    e = owned.get();
    jobs_.emplace(job_id, std::move(owned));
  }
  spec.job_id = job_id;
  {
    std::lock_guard lock(e->mutex);
    e->record.job_id = job_id;
    e->record.group = group;
    e->record.spec = spec;
    Timestamp at = deps_.clock.now();
    try {
      append(*e, Json{{"type", "created"}, {"at", at}, {"group", group}, {"spec", to_json(spec)}});
    } catch (const Error&) {
      std::unique_lock jl(jobs_mutex_);
      jobs_.erase(job_id);
      throw;
    }
    e->record.transitions.emplace_back(JobState::Created, at);
  }
  deps_.executor.post([this, job_id] { advance(job_id); });
  return job_id;
}

ValidatedJob Broker::revalidate(const JobRecord& r) const {
  JobSpec spec = r.spec;
  if (!r.tool_version.empty()) spec.tool_version = r.tool_version;
  return validate_jobspec(spec, deps_.tools);
}

std::unique_ptr<TransportSession> Broker::open_session(const std::string& cluster_id) {
  ClusterProfile profile = deps_.clusters.cluster(cluster_id);
  auto credential = deps_.credentials.get(cluster_id);
  if (!credential) fail(ErrorCode::InvalidArgument, "no credential for cluster " + cluster_id);
  return connect(profile, *credential, deps_.backend, deps_.transfers, deps_.clock);
}

void Broker::advance(const std::string& job_id) {
  Entry& e = entry(job_id);
  std::lock_guard lock(e.mutex);
  if (e.failing) {
    finish_failure(e);
    return;
  }
  while (!e.cancelling && !e.failing && step(e)) {
  }
}

bool Broker::step(Entry& e) {
  switch (e.record.state) {
    case JobState::Created: do_validate(e); break;
    case JobState::Validated: do_reserve(e); break;
    case JobState::Reserved: do_stage(e); break;
    case JobState::Staged: do_submit(e); break;
    default: return false;
  }
  return !is_terminal(e.record.state);
}

void Broker::do_validate(Entry& e) {
  ValidatedJob v;
  try {
    v = validate_jobspec(e.record.spec, deps_.tools);
  } catch (const Error& err) {
    start_failure(e, Phase::Validate, err.what());
    finish_failure(e);
    return;
  }
  transition(e, JobState::Validated,
             {{"tool_version", v.tool.version}, {"container_digest", v.tool.container_digest}});
  e.record.tool_version = v.tool.version;
  e.record.container_digest = v.tool.container_digest;
}

void Broker::do_reserve(Entry& e) {
  JobRecord& r = e.record;
  Reservation res;
  std::string cluster_id;
  try {
    ValidatedJob v = revalidate(r);
    Timestamp now = deps_.clock.now();
    Selection sel = deps_.clusters.select_cluster(v, r.group, now);
    res = deps_.clusters.reserve(sel.account.account_id, v.resources, now, r.job_id);
    cluster_id = sel.cluster.cluster_id;
  } catch (const SelectionError& err) {
    // When only the ledger stands in the way, report it as the ledger would.
    std::string reason = err.what();
    switch (err.cause()) {
      case IneligibleCause::QuotaExhausted: reason = "QuotaExceeded: " + err.detail(); break;
      case IneligibleCause::ConcurrencyLimit: reason = "ConcurrencyLimit: " + err.detail(); break;
      case IneligibleCause::AccountExpired: reason = "AccountExpired: " + err.detail(); break;
      default: break;
    }
    start_failure(e, Phase::Reserve, reason);
    finish_failure(e);
    return;
  } catch (const Error& err) {
    start_failure(e, Phase::Reserve, err.what());
    finish_failure(e);
    return;
  }
  transition(e, JobState::Reserved,
             {{"cluster_id", cluster_id}, {"account_id", res.account_id}, {"reservation", to_json(res)}});
  r.cluster_id = cluster_id;
  r.account_id = res.account_id;
  r.reservation = res;
}

void Broker::do_stage(Entry& e) {
  JobRecord& r = e.record;
  StagedLayout layout;
  try {
    ValidatedJob v = revalidate(r);
    ClusterProfile profile = deps_.clusters.cluster(r.cluster_id);
    auto session = open_session(r.cluster_id);
    StagingContext ctx{profile, deps_.artifacts, deps_.endpoints, &bundle_locks_};
    layout = stage_job(v, *session, ctx);
  } catch (const Error& err) {
    start_failure(e, Phase::Stage, err.what());
    finish_failure(e);
    return;
  }
  transition(e, JobState::Staged, {{"layout", to_json(layout)}});
  r.layout = layout;
}

void Broker::do_submit(Entry& e) {
  JobRecord& r = e.record;
  std::string remote_id;
  std::string digest;
  try {
    ValidatedJob v = revalidate(r);
    if (!check_validity(deps_.clusters.account(r.account_id), deps_.clock.now())) {
      fail(ErrorCode::AccountExpired, "account '" + r.account_id + "' expired before submission");
    }
    ClusterProfile profile = deps_.clusters.cluster(r.cluster_id);
    BatchScript script = render_batch_script(v, *r.layout, profile);
    auto session = open_session(r.cluster_id);
    std::string wd = r.layout->work_dir;
    session->put_file(render_job_context(v, *r.layout), wd + "/" + std::string(kContextName));
    session->put_file(script.text, wd + "/" + std::string(kScriptName));
    auto res = session->exec_command("sbatch " + wd + "/" + std::string(kScriptName));
    if (res.exit_code != 0) fail(ErrorCode::RemoteIOError, "sbatch: " + res.err);
    constexpr std::string_view prefix = "Submitted batch job ";
    auto words = split_command(res.out);
    if (res.out.rfind(prefix, 0) != 0 || words.size() != 4) fail(ErrorCode::RemoteIOError, "unexpected sbatch reply: " + res.out);
    remote_id = words[3];
    digest = script.script_digest;
  } catch (const Error& err) {
    start_failure(e, Phase::Submit, err.what());
    finish_failure(e);
    return;
  }
  transition(e, JobState::Submitted, {{"remote_job_id", remote_id}, {"script_digest", digest}});
  r.remote_job_id = remote_id;
  r.script_digest = digest;
}

Broker::PollOutcome Broker::poll_job(Entry& e, TransportSession* session, const std::string& connect_error) {
  JobRecord& r = e.record;
  auto transient = [&](const std::string& why) {
    if (++e.poll_failures >= options_.max_poll_failures) {
      start_failure(e, Phase::Poll, fmt::format("{} consecutive status query failures, last: {}", e.poll_failures, why));
      return PollOutcome::RemoteFailed;
    }
    return PollOutcome::Unchanged;
  };
  if (session == nullptr) return transient(connect_error);
  CommandResult res;
  try {
    res = session->exec_command("squeue " + r.remote_job_id);
  } catch (const Error& err) {
    return transient(err.what());
  }
  auto f = split_command(res.out);
  if (res.exit_code != 0 || f.size() < 2 || f[0] != r.remote_job_id) {
    return transient(res.err.empty() ? "unexpected squeue reply: " + res.out : res.err);
  }
  e.poll_failures = 0;
  const std::string& state = f[1];
  if (state == "PENDING") return PollOutcome::Unchanged;
  if (state == "RUNNING") {
    if (r.state == JobState::Running) return PollOutcome::Unchanged;
    transition(e, JobState::Running);
    return PollOutcome::Changed;
  }
  if ((state == "COMPLETED" || state == "FAILED") && f.size() == 3) {
    int code;
    try {
      code = std::stoi(f[2]);
    } catch (const std::exception&) {
      return transient("bad exit code in squeue reply: " + res.out);
    }
    read_sacct(*session, r);
    r.exit_code = code;
    if (r.state == JobState::Submitted) transition(e, JobState::Running);
    if (code == 0) {
      transition(e, JobState::RemoteComplete, remote_times(r));
      e.fetch_attempts = 0;
      e.next_fetch_at.reset();
      return PollOutcome::Finished;
    }
    e.failing = {Phase::Proc, "exit code " + std::to_string(code)};
    Json event{{"type", "failing"}, {"phase", "PROC"}, {"reason", e.failing->second}};
    event.update(remote_times(r));
    append(e, std::move(event));
    return PollOutcome::RemoteFailed;
  }
  if (state == "CANCELLED") {
    read_sacct(*session, r);
    e.failing = {Phase::Proc, "cancelled on the cluster"};
    Json event{{"type", "failing"}, {"phase", "PROC"}, {"reason", e.failing->second}};
    event.update(remote_times(r));
    append(e, std::move(event));
    return PollOutcome::RemoteFailed;
  }
  return transient("unexpected squeue reply: " + res.out);
}

std::vector<StateChange> Broker::poll_once() {
  std::vector<Entry*> all;
  {
    std::shared_lock lock(jobs_mutex_);
    for (auto& [id, e] : jobs_) all.push_back(e.get());
  }
  std::map<Entry*, std::size_t> before;
  auto touch = [&](Entry& e) { before.try_emplace(&e, e.record.transitions.size()); };

  // Status of every active job is read first, so detection times all carry
  // this tick rather than trailing behind other jobs' transfers.
  std::map<std::string, std::unique_ptr<TransportSession>> sessions;
  std::map<std::string, std::string> connect_errors;
  for (Entry* e : all) {
    std::lock_guard lock(e->mutex);
    JobRecord& r = e->record;
    if (r.state != JobState::Submitted && r.state != JobState::Running) continue;
    if (e->failing || e->cancelling) continue;
    if (!sessions.count(r.cluster_id) && !connect_errors.count(r.cluster_id)) {
      try {
        sessions[r.cluster_id] = open_session(r.cluster_id);
      } catch (const Error& err) {
        connect_errors[r.cluster_id] = err.what();
      }
    }
    touch(*e);
    auto s = sessions.find(r.cluster_id);
    poll_job(*e, s == sessions.end() ? nullptr : s->second.get(), connect_errors[r.cluster_id]);
  }
  sessions.clear();

  Timestamp now = deps_.clock.now();
  for (Entry* e : all) {
    std::lock_guard lock(e->mutex);
    JobRecord& r = e->record;
    if (is_terminal(r.state)) continue;
    if (e->failing) {
      touch(*e);
      finish_failure(*e);
    } else if (e->cancelling) {
      touch(*e);
      finish_cancel(*e);
    } else if (r.state == JobState::RemoteComplete || r.state == JobState::Fetched) {
      if (e->next_fetch_at && now < *e->next_fetch_at) continue;
      touch(*e);
      complete(*e);
    }
  }

  std::vector<StateChange> changes;
  for (auto [e, n] : before) {
    std::lock_guard lock(e->mutex);
    const auto& t = e->record.transitions;
    for (std::size_t i = n; i < t.size(); ++i) changes.push_back({e->record.job_id, t[i - 1].first, t[i].first, t[i].second});
  }
  std::sort(changes.begin(), changes.end(), [](const StateChange& a, const StateChange& b) {
    return std::tie(a.at, a.job_id) < std::tie(b.at, b.job_id);
  });
  return changes;
}

void Broker::complete(Entry& e) {
  JobRecord& r = e.record;
  if (r.state == JobState::RemoteComplete && !try_fetch(e)) return;
  if (r.state != JobState::Fetched) return;
  fs::path dir = results_dir(r.job_id);
  std::ofstream(dir / "manifest.json") << dump_manifest(manifest_of(r));
  settle(e);
  gc(e);
  notify(e, JobState::Notified);
  transition(e, JobState::Notified);
}

bool Broker::try_fetch(Entry& e) {
  JobRecord& r = e.record;
  std::vector<FetchedOutput> outputs;
  try {
    ValidatedJob v = revalidate(r);
    auto session = open_session(r.cluster_id);
    outputs = fetch_outputs(v, *r.layout, *session);
  } catch (const Error& err) {
    ++e.fetch_attempts;
    bool permanent = err.code() == ErrorCode::MissingOutput || err.code() == ErrorCode::UnknownTool;
    if (permanent || e.fetch_attempts > options_.fetch_retries) {
      start_failure(e, Phase::Fetch, err.what());
      finish_failure(e);
    } else {
      e.next_fetch_at = deps_.clock.now() + options_.fetch_retry_spacing;
    }
    return false;
  }
  fs::path dir = results_dir(r.job_id);
  Json outs = Json::array();
  std::vector<OutputRecord> records;
  for (const auto& o : outputs) {
    fs::path file = dir / o.name;
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out.write(o.bytes.data(), static_cast<std::streamsize>(o.bytes.size()));
    if (!out) fail(ErrorCode::Persistence, "cannot store result " + file.string());
    records.push_back({o.name, o.digest, o.bytes.size()});
    outs.push_back({{"name", o.name}, {"digest", o.digest}, {"bytes", o.bytes.size()}});
  }
  transition(e, JobState::Fetched, {{"outputs", outs}});
  r.outputs = std::move(records);
  e.next_fetch_at.reset();
  return true;
}

std::uint64_t Broker::charged_runtime_s(const JobRecord& r) const {
  if (r.remote_started && r.remote_finished && *r.remote_finished >= *r.remote_started) {
    Timestamp span = *r.remote_finished - *r.remote_started;
    return static_cast<std::uint64_t>((span + kMicrosPerSecond - 1) / kMicrosPerSecond);
  }
  // The cluster reports an end but no start: it left the queue without running.
  if (r.remote_finished && !r.remote_started) return 0;
  // Submitted but usage unknown: charge what was reserved.
  if (!r.remote_job_id.empty() && r.reservation) return r.reservation->walltime_s;
  return 0;
}

void Broker::settle(Entry& e) {
  JobRecord& r = e.record;
  if (!r.reservation || r.settled_charge) return;
  Settlement s = deps_.clusters.settle(r.reservation->reservation_id, charged_runtime_s(r));
  append(e, Json{{"type", "settled"}, {"charged", s.charged}});
  r.settled_charge = s.charged;
}

void Broker::gc(Entry& e) {
  JobRecord& r = e.record;
  if (!r.layout || r.workdir_removed) return;
  JobState as = r.state == JobState::Fetched ? JobState::Fetched : e.cancelling ? JobState::Cancelled : JobState::Failed;
  try {
    auto session = open_session(r.cluster_id);
    gc_workdir(*r.layout, as, *session);
  } catch (const Error&) {
    return;  // left for the operator; the work dir holds nothing the broker still needs
  }
  append(e, Json{{"type", "gc"}});
  r.workdir_removed = true;
}

void Broker::notify(Entry& e, JobState state) {
  Notification n{deps_.clock.now(), e.record.job_id, state, e.record.exit_code, e.record.spec.notify_to};
  for (auto* sink : deps_.sinks) sink->deliver(n);
}

void Broker::start_failure(Entry& e, Phase phase, const std::string& reason) {
  e.failing = {phase, reason};
  append(e, Json{{"type", "failing"}, {"phase", to_string(phase)}, {"reason", reason}});
}

void Broker::finish_failure(Entry& e) {
  JobRecord& r = e.record;
  settle(e);
  gc(e);
  notify(e, JobState::Failed);
  auto [phase, reason] = *e.failing;
  transition(e, JobState::Failed, {{"phase", to_string(phase)}, {"reason", reason}});
  r.failure_phase = phase;
  r.failure_reason = reason;
}

void Broker::finish_cancel(Entry& e) {
  JobRecord& r = e.record;
  if ((r.state == JobState::Submitted || r.state == JobState::Running) && !r.settled_charge) {
    try {
      auto session = open_session(r.cluster_id);
      session->exec_command("scancel " + r.remote_job_id);
      read_sacct(*session, r);
    } catch (const Error&) {
      // unreachable cluster: the reservation is charged in full below
    }
  }
  settle(e);
  gc(e);
  notify(e, JobState::Cancelled);
  transition(e, JobState::Cancelled);
}

void Broker::cancel(const std::string& job_id) {
  Entry& e = entry(job_id);
  std::lock_guard lock(e.mutex);
  if (is_terminal(e.record.state)) fail(ErrorCode::AlreadyTerminal, job_id + " is " + std::string(to_string(e.record.state)));
  if (e.failing) {
    finish_failure(e);
    fail(ErrorCode::AlreadyTerminal, job_id + " failed");
  }
  if (!e.cancelling) {
    append(e, Json{{"type", "cancelling"}});
    e.cancelling = true;
  }
  finish_cancel(e);
}

JobRecord Broker::status(const std::string& job_id) const {
  Entry& e = entry(job_id);
  std::lock_guard lock(e.mutex);
  return e.record;
}

std::vector<JobRecord> Broker::jobs() const {
  std::vector<Entry*> all;
  {
    std::shared_lock lock(jobs_mutex_);
    for (const auto& [id, e] : jobs_) all.push_back(e.get());
  }
  std::vector<JobRecord> out;
  for (Entry* e : all) {
    std::lock_guard lock(e->mutex);
    out.push_back(e->record);
  }
  return out;
}

Timestamp Broker::next_tick(Timestamp t) const {
  Timestamp p = options_.poll_interval;
  Timestamp q = t / p;
  if (t < 0 && t % p != 0) --q;
  return (q + 1) * p;
}

Timestamp Broker::next_due() const {
  Timestamp due = next_tick(deps_.clock.now());
  std::shared_lock lock(jobs_mutex_);
  for (const auto& [id, e] : jobs_) {
    std::lock_guard el(e->mutex);
    if (e->next_fetch_at && !is_terminal(e->record.state)) due = std::min(due, *e->next_fetch_at);
  }
  return due;
}

fs::path Broker::results_dir(const std::string& job_id) const {
  fs::path dir = state_dir_ / "results" / job_id;
  fs::create_directories(dir);
  return dir;
}

void Broker::replay(const std::string& job_id, const std::vector<Json>& events, Entry& e) const {
  JobRecord& r = e.record;
  auto corrupt = [&](const std::string& why) { fail(ErrorCode::CorruptStore, job_id + ": " + why); };
  try {
    for (std::size_t i = 0; i < events.size(); ++i) {
      const Json& ev = events[i];
      std::string type = ev.at("type").get<std::string>();
      if ((i == 0) != (type == "created")) corrupt("log must start with exactly one created event");
      if (type == "created") {
        r.job_id = job_id;
        r.group = ev.at("group").get<std::string>();
        r.spec = jobspec_from_json(ev.at("spec"));
        if (r.spec.job_id != job_id) corrupt("spec names job " + r.spec.job_id);
        r.state = JobState::Created;
        r.transitions.emplace_back(JobState::Created, ev.at("at").get<Timestamp>());
      } else if (type == "transition") {
        JobState to = job_state_from_string(ev.at("to").get<std::string>());
        Timestamp at = ev.at("at").get<Timestamp>();
        if (!transition_allowed(r.state, to)) {
          corrupt(fmt::format("illegal transition {} -> {}", to_string(r.state), to_string(to)));
        }
        if (at <= r.transitions.back().second) corrupt("timestamps do not increase");
        switch (to) {
          case JobState::Validated:
            r.tool_version = ev.at("tool_version").get<std::string>();
            r.container_digest = ev.at("container_digest").get<std::string>();
            break;
          case JobState::Reserved:
            r.cluster_id = ev.at("cluster_id").get<std::string>();
            r.account_id = ev.at("account_id").get<std::string>();
            r.reservation = reservation_from_json(ev.at("reservation"));
            break;
          case JobState::Staged: r.layout = layout_from_json(ev.at("layout")); break;
          case JobState::Submitted:
            r.remote_job_id = ev.at("remote_job_id").get<std::string>();
            r.script_digest = ev.at("script_digest").get<std::string>();
            break;
          case JobState::RemoteComplete: apply_remote_times(ev, r); break;
          case JobState::Fetched:
            for (const auto& o : ev.at("outputs")) {
              r.outputs.push_back({o.at("name").get<std::string>(), o.at("digest").get<std::string>(),
                                   o.at("bytes").get<std::uint64_t>()});
            }
            break;
          case JobState::Failed:
            r.failure_phase = phase_from_string(ev.at("phase").get<std::string>());
            r.failure_reason = ev.at("reason").get<std::string>();
            break;
          default: break;
        }
        r.state = to;
        r.transitions.emplace_back(to, at);
      } else if (type == "failing") {
        e.failing = {phase_from_string(ev.at("phase").get<std::string>()), ev.at("reason").get<std::string>()};
        apply_remote_times(ev, r);
      } else if (type == "cancelling") {
        e.cancelling = true;
      } else if (type == "settled") {
        if (!r.reservation || r.settled_charge) corrupt("settled without an open reservation");
        r.settled_charge = ev.at("charged").get<CoreSeconds>();
      } else if (type == "gc") {
        r.workdir_removed = true;
      } else {
        corrupt("unknown event type " + type);
      }
    }
  } catch (const Json::exception& ex) {
    corrupt(ex.what());
  } catch (const Error& err) {
    if (err.code() == ErrorCode::CorruptStore) throw;
    corrupt(err.what());
  }
  if (events.empty()) corrupt("empty log");
  e.events = events.size();
}

void Broker::recover() {
  auto logs = store_.load_all();
  std::map<std::string, std::unique_ptr<Entry>> loaded;
  for (const auto& [id, events] : logs) {
    auto e = std::make_unique<Entry>();
    replay(id, events, *e);
    loaded.emplace(id, std::move(e));
  }
  std::vector<std::string> resume;
  {
    std::unique_lock lock(jobs_mutex_);
    if (!jobs_.empty()) fail(ErrorCode::InvalidArgument, "recover() must run before any submission");
    for (auto& [id, e] : loaded) {
      const JobRecord& r = e->record;
      if (r.reservation) {
        if (r.settled_charge) {
          deps_.clusters.restore_settlement(*r.reservation, *r.settled_charge);
        } else {
          deps_.clusters.restore_reservation(*r.reservation);
        }
      }
      next_seq_ = std::max(next_seq_, job_seq(id) + 1);
      if (!is_terminal(r.state)) resume.push_back(id);
      jobs_.emplace(id, std::move(e));
    }
  }
  for (const auto& id : resume) {
    deps_.executor.post([this, id] {
      Entry& e = entry(id);
      std::lock_guard lock(e.mutex);
      JobRecord& r = e.record;
      if (is_terminal(r.state)) return;
      if (e.failing) {
        finish_failure(e);
      } else if (e.cancelling) {
        finish_cancel(e);
      } else if (r.state == JobState::RemoteComplete || r.state == JobState::Fetched) {
        complete(e);
      } else {
        while (!e.cancelling && !e.failing && step(e)) {
        }
      }
    });
  }
}

}  // namespace crossbound
