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

#include "crossbound/simcluster.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"

namespace crossbound {
using namespace json_detail;

void RuntimeModel::validate() const {
  if (kind == Kind::Fixed) {
    if (!(fixed_s >= 0)) fail(ErrorCode::InvalidArgument, "fixed runtime must be >= 0");
    for (const auto& [tool, s] : per_tool_s) {
      if (!(s >= 0)) fail(ErrorCode::InvalidArgument, "runtime for " + tool + " must be >= 0");
    }
    return;
  }
  if (table.empty()) fail(ErrorCode::InvalidArgument, "runtime table is empty");
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!(table[i].second >= 0)) fail(ErrorCode::InvalidArgument, "runtime table minutes must be >= 0");
    if (i > 0 && !(table[i].first > table[i - 1].first)) {
      fail(ErrorCode::InvalidArgument, "runtime table records must be strictly increasing");
    }
  }
}

Timestamp RuntimeModel::runtime_for(const JobContext& job) const {
  auto to_micros = [](double s) { return static_cast<Timestamp>(std::llround(s * kMicrosPerSecond)); };
  if (kind == Kind::Fixed) {
    auto it = per_tool_s.find(job.tool_id);
    return to_micros(it == per_tool_s.end() ? fixed_s : it->second);
  }
  auto p = std::find_if(job.parameters.begin(), job.parameters.end(),
                        [](const Parameter& q) { return q.name == "records"; });
  if (p == job.parameters.end()) fail(ErrorCode::InvalidArgument, "runtime table needs a 'records' parameter");
  double records = 0;
  auto [end, ec] = std::from_chars(p->value.data(), p->value.data() + p->value.size(), records);
  if (ec != std::errc() || end != p->value.data() + p->value.size() || !(records >= 0)) {
    fail(ErrorCode::InvalidArgument, "'records' is not a number: " + p->value);
  }
  double minutes;
  if (records <= table.front().first) {
    minutes = table.front().second;
  } else if (records >= table.back().first) {
    minutes = table.back().second;
  } else {
    auto hi = std::find_if(table.begin(), table.end(), [&](const auto& pt) { return pt.first >= records; });
    auto lo = hi - 1;
    if (hi->first == records) {
      minutes = hi->second;
    } else {
      double f = (records - lo->first) / (hi->first - lo->first);
      minutes = lo->second + f * (hi->second - lo->second);
    }
  }
  return to_micros(minutes * 60);
}

namespace {

const char* field_name(FailureRule::Field f) {
  switch (f) {
    case FailureRule::Field::ToolId: return "tool_id";
    case FailureRule::Field::JobName: return "job_name";
    case FailureRule::Field::Param: return "param";
  }
  return "?";
}

}  // namespace

Json to_json(const SimClusterConfig& c) {
  Json runtime;
  if (c.runtime.kind == RuntimeModel::Kind::Fixed) {
    runtime = {{"kind", "FIXED"}, {"seconds", c.runtime.fixed_s}, {"per_tool", c.runtime.per_tool_s}};
  } else {
    Json points = Json::array();
    for (const auto& [r, m] : c.runtime.table) points.push_back({r, m});
    runtime = {{"kind", "TABLE"}, {"points", points}};
  }
  Json failures = Json::array();
  for (const auto& f : c.failures) {
    Json rule{{"match", field_name(f.field)}, {"value", f.value}, {"exit_code", f.exit_code}};
    if (f.field == FailureRule::Field::Param) rule["param"] = f.param;
    failures.push_back(rule);
  }
  return {{"cluster_id", c.cluster_id}, {"slots", c.slots}, {"runtime", runtime}, {"failures", failures}};
}

SimClusterConfig sim_config_from_json(const Json& j) {
  expect_keys(j, "sim config", {"cluster_id", "slots", "runtime", "failures"});
  SimClusterConfig c;
  c.cluster_id = get_string(j, "sim config", "cluster_id");
  c.slots = static_cast<unsigned>(get_uint(j, "sim config", "slots"));
  if (c.slots == 0) fail(ErrorCode::InvalidArgument, "sim config: slots must be positive");
  if (j.contains("runtime")) {
    const Json& r = j["runtime"];
    expect_keys(r, "runtime", {"kind", "seconds", "per_tool", "points"});
    std::string kind = get_string(r, "runtime", "kind");
    try {
      if (kind == "FIXED") {
        c.runtime.kind = RuntimeModel::Kind::Fixed;
        if (r.contains("seconds")) c.runtime.fixed_s = r["seconds"].get<double>();
        if (r.contains("per_tool")) c.runtime.per_tool_s = r["per_tool"].get<std::map<std::string, double>>();
      } else if (kind == "TABLE") {
        c.runtime.kind = RuntimeModel::Kind::Table;
        for (const auto& pt : require(r, "runtime", "points")) {
          if (!pt.is_array() || pt.size() != 2) fail(ErrorCode::InvalidArgument, "runtime point must be [records, minutes]");
          c.runtime.table.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        }
      } else {
        fail(ErrorCode::InvalidArgument, "runtime kind must be FIXED or TABLE");
      }
    } catch (const Json::exception& e) {
      fail(ErrorCode::InvalidArgument, std::string("runtime: ") + e.what());
    }
  }
  c.runtime.validate();
  if (j.contains("failures")) {
    for (const auto& f : j["failures"]) {
      expect_keys(f, "failure rule", {"match", "param", "value", "exit_code"});
      FailureRule rule;
      std::string match = get_string(f, "failure rule", "match");
      if (match == "tool_id") {
        rule.field = FailureRule::Field::ToolId;
      } else if (match == "job_name") {
        rule.field = FailureRule::Field::JobName;
      } else if (match == "param") {
        rule.field = FailureRule::Field::Param;
        rule.param = get_string(f, "failure rule", "param");
      } else {
        fail(ErrorCode::InvalidArgument, "failure rule match must be tool_id, job_name or param");
      }
      rule.value = get_string(f, "failure rule", "value");
      rule.exit_code = static_cast<int>(get_int(f, "failure rule", "exit_code"));
      c.failures.push_back(rule);
    }
  }
  return c;
}

std::string_view to_string(SimState s) noexcept {
  switch (s) {
    case SimState::Pending: return "PENDING";
    case SimState::Running: return "RUNNING";
    case SimState::Completed: return "COMPLETED";
    case SimState::Failed: return "FAILED";
    case SimState::Cancelled: return "CANCELLED";
  }
  return "?";
}

static SimState sim_state_from_string(std::string_view s) {
  for (auto st : {SimState::Pending, SimState::Running, SimState::Completed, SimState::Failed, SimState::Cancelled}) {
    if (to_string(st) == s) return st;
  }
  fail(ErrorCode::CorruptStore, "unknown sim state " + std::string(s));
}

std::string simulated_output(const std::string& tool_id, const std::string& tool_version, const DigestList& inputs,
                             const std::vector<Parameter>& parameters, const std::string& output_name) {
  DigestList sorted = inputs;
  std::sort(sorted.begin(), sorted.end());
  std::string h = sha256_hex("crossbound-sim|" + tool_id + "|" + tool_version);
  for (const auto& [name, digest] : sorted) h = sha256_hex(h + "|in|" + name + "|" + digest);
  for (const auto& p : parameters) h = sha256_hex(h + "|param|" + p.name + "=" + p.value);
  std::string value = sha256_hex(h + "|out|" + output_name);
  return tool_id + " " + tool_version + "\n" + output_name + " " + value + "\n";
}

SimCluster::SimCluster(SimClusterConfig config, RemoteFs sandbox, Clock& clock)
    : config_(std::move(config)), sandbox_(std::move(sandbox)), clock_(clock) {
  config_.runtime.validate();
  if (config_.slots == 0) fail(ErrorCode::InvalidArgument, "slots must be positive");
}

SimJob& SimCluster::find(const std::string& id) {
  for (auto& j : jobs_) {
    if (j.remote_job_id == id) return j;
  }
  fail(ErrorCode::UnknownJob, "no remote job " + id);
}

unsigned SimCluster::running_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<unsigned>(
      std::count_if(jobs_.begin(), jobs_.end(), [](const SimJob& j) { return j.state == SimState::Running; }));
}

void SimCluster::start_pending(Timestamp at, std::vector<SimEvent>& events) {
  auto running = std::count_if(jobs_.begin(), jobs_.end(), [](const SimJob& j) { return j.state == SimState::Running; });
  for (auto& j : jobs_) {
    if (static_cast<unsigned>(running) >= config_.slots) break;
    if (j.state != SimState::Pending) continue;
    j.state = SimState::Running;
    j.started = at;
    ++running;
    events.push_back({at, j.remote_job_id, SimState::Running});
  }
}

static Timestamp finish_time(const SimJob& j) {
  return *j.started + std::min(j.runtime, seconds(static_cast<std::int64_t>(j.walltime_s)));
}

void SimCluster::finish(SimJob& job, std::vector<SimEvent>& events) {
  job.finished = finish_time(job);
  int code;
  if (job.runtime > seconds(static_cast<std::int64_t>(job.walltime_s))) {
    code = 124;
  } else if (job.forced_exit) {
    code = *job.forced_exit;
  } else {
    code = execute(job);
  }
  job.exit_code = code;
  job.state = code == 0 ? SimState::Completed : SimState::Failed;
  sandbox_.write_atomic(job.work_dir + "/job.out", "exit " + std::to_string(code) + "\n");
  events.push_back({*job.finished, job.remote_job_id, job.state});
}

// Runs the simulated tool against whatever is staged right now; 2 when an
// input or the container vanished, 127 when the context is unreadable.
int SimCluster::execute(const SimJob& job) {
  auto ctx_text = sandbox_.read(job.work_dir + "/" + std::string(kContextName));
  if (!ctx_text) return 127;
  JobContext ctx;
  try {
    ctx = parse_job_context(*ctx_text);
  } catch (const Error&) {
    return 127;
  }
  auto parsed = parse_directives(job.script);
  if (!parsed.container_path || !sandbox_.exists(*parsed.container_path)) return 127;
  DigestList inputs;
  for (const auto& [name, path] : ctx.inputs) {
    auto bytes = sandbox_.read(path);
    if (!bytes) return 2;
    inputs.emplace_back(name, sha256_hex(*bytes));
  }
  for (const auto& out : ctx.outputs) {
    sandbox_.write_atomic(job.work_dir + "/" + out,
                          simulated_output(ctx.tool_id, ctx.tool_version, inputs, ctx.parameters, out));
  }
  return 0;
}

std::vector<SimEvent> SimCluster::process_locked(Timestamp t) {
  std::vector<SimEvent> events;
  for (;;) {
    SimJob* next = nullptr;
    for (auto& j : jobs_) {
      if (j.state != SimState::Running) continue;
      Timestamp f = finish_time(j);
      if (f > t) continue;
      // jobs_ is in submission order, so strict < keeps FIFO on ties
      if (next == nullptr || f < finish_time(*next)) next = &j;
    }
    if (next == nullptr) break;
    Timestamp at = finish_time(*next);
    finish(*next, events);
    start_pending(at, events);
  }
  return events;
}

std::vector<SimEvent> SimCluster::process_until(Timestamp t) {
  std::lock_guard lock(mutex_);
  return process_locked(t);
}

std::vector<SimEvent> SimCluster::advance_clock(std::int64_t secs) {
  if (secs < 0) fail(ErrorCode::InvalidArgument, "cannot advance by a negative amount");
  auto* vc = dynamic_cast<VirtualClock*>(&clock_);
  if (vc == nullptr) fail(ErrorCode::InvalidArgument, "advance_clock needs a virtual clock");
  Timestamp t = vc->advance_by(seconds(secs));
  return process_until(t);
}

std::string SimCluster::sbatch(std::string_view script) {
  std::lock_guard lock(mutex_);
  Timestamp now = clock_.now();
  process_locked(now);
  ParsedScript parsed = parse_directives(script);
  if (!parsed.work_dir) fail(ErrorCode::MalformedDirective, "script has no cd line");
  auto ctx_text = sandbox_.read(*parsed.work_dir + "/" + std::string(kContextName));
  if (!ctx_text) fail(ErrorCode::InvalidArgument, "no job context in " + *parsed.work_dir);
  JobContext ctx = parse_job_context(*ctx_text);

  SimJob job;
  job.remote_job_id = std::to_string(next_id_++);
  job.script = std::string(script);
  job.job_name = parsed.job_name;
  job.work_dir = *parsed.work_dir;
  job.submitted = now;
  job.runtime = config_.runtime.runtime_for(ctx);
  job.walltime_s = parsed.resources.walltime_s;
  for (const auto& rule : config_.failures) {
    bool hit = false;
    switch (rule.field) {
      case FailureRule::Field::ToolId: hit = ctx.tool_id == rule.value; break;
      case FailureRule::Field::JobName: hit = parsed.job_name == rule.value; break;
      case FailureRule::Field::Param:
        hit = std::any_of(ctx.parameters.begin(), ctx.parameters.end(),
                          [&](const Parameter& p) { return p.name == rule.param && p.value == rule.value; });
        break;
    }
    if (hit) {
      job.forced_exit = rule.exit_code;
      break;
    }
  }
  jobs_.push_back(std::move(job));
  std::vector<SimEvent> ignored;
  start_pending(now, ignored);
  return jobs_.back().remote_job_id;
}

SimJob SimCluster::squeue(const std::string& id) {
  std::lock_guard lock(mutex_);
  process_locked(clock_.now());
  return find(id);
}

void SimCluster::scancel(const std::string& id) {
  std::lock_guard lock(mutex_);
  Timestamp now = clock_.now();
  process_locked(now);
  SimJob& job = find(id);
  if (job.state != SimState::Pending && job.state != SimState::Running) return;
  job.state = SimState::Cancelled;
  job.finished = now;
  std::vector<SimEvent> ignored;
  start_pending(now, ignored);
}

std::vector<SimJob> SimCluster::jobs() const {
  std::lock_guard lock(mutex_);
  return jobs_;
}

std::vector<SimJob> SimCluster::active_jobs() const {
  std::lock_guard lock(mutex_);
  std::vector<SimJob> out;
  for (const auto& j : jobs_) {
    if (j.state == SimState::Pending || j.state == SimState::Running) out.push_back(j);
  }
  return out;
}

std::optional<CommandResult> SimCluster::fetch_object(const std::vector<std::string>& argv) {
  if (argv.size() != 4) return CommandResult{1, "", "usage: fetch-object <base_url> <key> <dest>\n"};
  const std::string& url = argv[1];
  const std::string& key = argv[2];
  constexpr std::string_view scheme = "file://";
  if (url.rfind(scheme, 0) != 0) return CommandResult{2, "", url + ": unsupported scheme\n"};
  std::filesystem::path base(url.substr(scheme.size()));
  std::error_code ec;
  if (!base.is_absolute() || !std::filesystem::is_directory(base, ec)) {
    return CommandResult{2, "", url + ": endpoint unreachable\n"};
  }
  if (!is_safe_relative_path(key)) return CommandResult{1, "", key + ": bad object key\n"};
  std::ifstream in(base / key, std::ios::binary);
  if (!in) return CommandResult{1, "", key + ": no such object\n"};
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    sandbox_.write_atomic(argv[3], buf.str());
  } catch (const Error& e) {
    return CommandResult{1, "", std::string(e.what()) + "\n"};
  }
  return CommandResult{0, "", ""};
}

std::optional<CommandResult> SimCluster::handle(const std::vector<std::string>& argv) {
  if (argv.empty()) return std::nullopt;
  const std::string& verb = argv[0];
  auto usage = [&](const char* text) { return CommandResult{1, "", std::string("usage: ") + text + "\n"}; };
  try {
    if (verb == "sbatch") {
      if (argv.size() != 2) return usage("sbatch <path>");
      auto script = sandbox_.read(argv[1]);
      if (!script) return CommandResult{1, "", "sbatch: " + argv[1] + ": no such file\n"};
      return CommandResult{0, "Submitted batch job " + sbatch(*script) + "\n", ""};
    }
    if (verb == "squeue") {
      if (argv.size() != 2) return usage("squeue <id>");
      SimJob j = squeue(argv[1]);
      std::string line = j.remote_job_id + " " + std::string(to_string(j.state));
      if (j.state == SimState::Completed || j.state == SimState::Failed) line += " " + std::to_string(*j.exit_code);
      return CommandResult{0, line + "\n", ""};
    }
    if (verb == "sacct") {
      if (argv.size() != 2) return usage("sacct <id>");
      SimJob j = squeue(argv[1]);
      auto t = [](const std::optional<Timestamp>& v) { return v ? std::to_string(*v) : std::string("-"); };
      return CommandResult{0, j.remote_job_id + " " + std::string(to_string(j.state)) + " " + t(j.started) + " " +
                                  t(j.finished) + "\n",
                           ""};
    }
    if (verb == "scancel") {
      if (argv.size() != 2) return usage("scancel <id>");
      scancel(argv[1]);
      return CommandResult{0, "", ""};
    }
    if (verb == "fetch-object") return fetch_object(argv);
  } catch (const Error& e) {
    return CommandResult{1, "", std::string(e.what()) + "\n"};
  }
  return std::nullopt;
}

Json SimCluster::state_to_json() const {
  std::lock_guard lock(mutex_);
  Json jobs = Json::array();
  auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
  for (const auto& j : jobs_) {
    jobs.push_back({{"remote_job_id", j.remote_job_id},
                    {"script", j.script},
                    {"job_name", j.job_name},
                    {"work_dir", j.work_dir},
                    {"state", to_string(j.state)},
                    {"submitted", j.submitted},
                    {"runtime", j.runtime},
                    {"walltime_s", j.walltime_s},
                    {"forced_exit", opt(j.forced_exit)},
                    {"started", opt(j.started)},
                    {"finished", opt(j.finished)},
                    {"exit_code", opt(j.exit_code)}});
  }
  return {{"next_id", next_id_}, {"jobs", jobs}};
}

void SimCluster::load_state(const Json& j) {
  std::lock_guard lock(mutex_);
  try {
    std::vector<SimJob> jobs;
    for (const auto& e : j.at("jobs")) {
      SimJob s;
      s.remote_job_id = e.at("remote_job_id").get<std::string>();
      s.script = e.at("script").get<std::string>();
      s.job_name = e.at("job_name").get<std::string>();
      s.work_dir = e.at("work_dir").get<std::string>();
      s.state = sim_state_from_string(e.at("state").get<std::string>());
      s.submitted = e.at("submitted").get<Timestamp>();
      s.runtime = e.at("runtime").get<Timestamp>();
      s.walltime_s = e.at("walltime_s").get<std::uint64_t>();
      if (!e.at("forced_exit").is_null()) s.forced_exit = e["forced_exit"].get<int>();
      if (!e.at("started").is_null()) s.started = e["started"].get<Timestamp>();
      if (!e.at("finished").is_null()) s.finished = e["finished"].get<Timestamp>();
      if (!e.at("exit_code").is_null()) s.exit_code = e["exit_code"].get<int>();
      jobs.push_back(std::move(s));
    }
    jobs_ = std::move(jobs);
    next_id_ = j.at("next_id").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::CorruptStore, std::string("sim state: ") + e.what());
  }
}

}  // namespace crossbound
