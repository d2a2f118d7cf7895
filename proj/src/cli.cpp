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

#include "crossbound/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "crossbound/bench.hpp"
#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/lifecycle.hpp"
#include "crossbound/simcluster.hpp"
#include "crossbound/tool_registry.hpp"

namespace crossbound {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSimScheme = "sim://";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file_atomic(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(ErrorCode::Persistence, "cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

fs::path sim_dir(const ClusterProfile& p) { return fs::path(p.endpoint.substr(kSimScheme.size())); }

/// Everything one invocation needs, loaded from the state directory.
class Workspace {
 public:
  explicit Workspace(fs::path dir)
      : dir_(std::move(dir)),
        tools_(ToolRegistry::open(dir_ / "tools", &clock_)),
        artifacts_(dir_ / "artifacts"),
        backend_(dir_ / "remote"),
        sink_(dir_ / "notifications.log") {
    fs::path config = dir_ / "config.json";
    if (fs::exists(config)) {
      Json j = parse_document(read_file(config));
      ClusterRegistry::load_into(clusters_, Json{{"clusters", j.value("clusters", Json::array())},
                                                 {"accounts", j.value("accounts", Json::array())}});
      for (const auto& e : j.value("endpoints", Json::array())) {
        auto ep = endpoint_from_json(e);
        endpoints_[ep.endpoint_id] = ep;
      }
      credentials_.load(j.value("credentials", Json::object()));
      poll_interval_s_ = j.value("poll_interval_s", poll_interval_s_);
    }
    transfers_ = TransferLog::open(dir_ / "transfers.jsonl");
    for (const auto& c : clusters_.clusters()) attach_sim(c);
  }

  ~Workspace() {
    for (auto& [id, sim] : sims_) {
      try {
        write_file_atomic(sim_dir(clusters_.cluster(id)) / ".sim" / "state.json", dump_document(sim->state_to_json()));
      } catch (...) {
        // best effort on unwind; the next command sees the previous state
      }
    }
  }

  Broker& broker() {
    if (!broker_) {
      BrokerOptions options;
      options.poll_interval = seconds(poll_interval_s_);
      broker_ = std::make_unique<Broker>(BrokerDeps{tools_, clusters_, backend_, credentials_, artifacts_, *transfers_,
                                                    clock_, executor_, endpoints_, {&sink_}},
                                         dir_, options);
      broker_->recover();
    }
    return *broker_;
  }

  void save_config() const {
    Json j = clusters_.to_json();
    Json eps = Json::array();
    for (const auto& [id, e] : endpoints_) eps.push_back(to_json(e));
    j["endpoints"] = eps;
    j["credentials"] = credentials_.to_json();
    j["poll_interval_s"] = poll_interval_s_;
    write_file_atomic(dir_ / "config.json", dump_document(j));
  }

  void attach_sim(const ClusterProfile& c) {
    fs::path root = sim_dir(c);
    backend_.attach(c.cluster_id, root);
    fs::path config = root / "sim.json";
    SimClusterConfig sc;
    sc.cluster_id = c.cluster_id;
    if (fs::exists(config)) sc = sim_config_from_json(parse_document(read_file(config)));
    auto sim = std::make_unique<SimCluster>(sc, RemoteFs(root), clock_);
    fs::path state = root / ".sim" / "state.json";
    if (fs::exists(state)) sim->load_state(parse_document(read_file(state)));
    backend_.set_handler(c.cluster_id, sim.get());
    sims_[c.cluster_id] = std::move(sim);
  }

  const fs::path& dir() const { return dir_; }
  ToolRegistry& tools() { return tools_; }
  ClusterRegistry& clusters() { return clusters_; }
  ArtifactStore& artifacts() { return artifacts_; }
  CredentialStore& credentials() { return credentials_; }
  std::map<std::string, ObjectStoreEndpoint>& endpoints() { return endpoints_; }
  SystemClock& clock() { return clock_; }

 private:
  fs::path dir_;
  SystemClock clock_;
  ToolRegistry tools_;
  ClusterRegistry clusters_;
  ArtifactStore artifacts_;
  LocalBackend backend_;
  CredentialStore credentials_;
  std::map<std::string, ObjectStoreEndpoint> endpoints_;
  std::unique_ptr<TransferLog> transfers_;
  FileSink sink_;
  InlineExecutor executor_;
  std::map<std::string, std::unique_ptr<SimCluster>> sims_;
  std::int64_t poll_interval_s_ = 600;
  std::unique_ptr<Broker> broker_;
};

std::string fmt_duration(const std::optional<double>& s) { return s ? fmt::format("{:.3f}", *s) : "-"; }

void print_status(const JobRecord& r, std::ostream& out) {
  PhaseDurations d = r.phase_durations();
  out << "job_id: " << r.job_id << "\n"
      << "state: " << to_string(r.state) << "\n"
      << "tool: " << r.spec.tool_id << " " << (r.tool_version.empty() ? r.spec.tool_version : r.tool_version) << "\n"
      << "cluster: " << (r.cluster_id.empty() ? "-" : r.cluster_id) << "\n"
      << "remote_job_id: " << (r.remote_job_id.empty() ? "-" : r.remote_job_id) << "\n";
  if (r.exit_code) out << "exit_code: " << *r.exit_code << "\n";
  if (r.failure_phase) out << "failure: " << to_string(*r.failure_phase) << ": " << r.failure_reason << "\n";
  out << "pre_proc_s: " << fmt_duration(d.pre_proc_s) << "\n"
      << "proc_s: " << fmt_duration(d.proc_s) << "\n"
      << "post_proc_s: " << fmt_duration(d.post_proc_s) << "\n";
  for (const auto& [state, at] : r.transitions) out << "  " << format_iso8601(at) << " " << to_string(state) << "\n";
}

Timestamp parse_time_or_now(const std::string& text, const Clock& clock) {
  return text.empty() ? clock.now() : parse_iso8601(text);
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"crossbound: submit and track jobs on remote HPC clusters", "crossbound"};
  app.require_subcommand(1);
  std::string state_dir;
  app.add_option("--state-dir", state_dir, "State directory (default $CROSSBOUND_STATE_DIR or ./state)");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Manage cluster profiles")->require_subcommand(1);
  auto* cluster_add = cluster->add_subcommand("add", "Register a cluster");
  ClusterProfile profile;
  std::string auth = "KEY";
  unsigned sim_slots = 1;
  double sim_runtime_s = 60;
  cluster_add->add_option("--id", profile.cluster_id)->required();
  cluster_add->add_option("--endpoint", profile.endpoint, "sim://<dir>")->required();
  cluster_add->add_option("--auth", auth, "KEY or TICKET")->capture_default_str();
  profile.scratch_root = "/scratch";
  profile.capabilities = {64, 256 * 1024, 0, 7 * 24 * 3600};
  cluster_add->add_option("--scratch", profile.scratch_root)->capture_default_str();
  cluster_add->add_option("--max-cpus", profile.capabilities.max_cpus)->capture_default_str();
  cluster_add->add_option("--max-mem-mb", profile.capabilities.max_mem_mb)->capture_default_str();
  cluster_add->add_option("--gpus", profile.capabilities.gpus_total)->capture_default_str();
  cluster_add->add_option("--max-walltime-s", profile.capabilities.max_walltime_s)->capture_default_str();
  cluster_add->add_option("--runtime-cmd", profile.container_runtime_cmd)->capture_default_str();
  cluster_add->add_option("--sim-slots", sim_slots, "Slots of a new simulated cluster")->capture_default_str();
  cluster_add->add_option("--sim-runtime-s", sim_runtime_s, "Fixed runtime of a new simulated cluster")
      ->capture_default_str();
  auto* cluster_list = cluster->add_subcommand("list", "List clusters");

  // account
  auto* account = app.add_subcommand("account", "Manage robot accounts")->require_subcommand(1);
  auto* account_add = account->add_subcommand("add", "Register a robot account");
  RobotAccount acct;
  double budget_h = 0;
  std::string valid_from, valid_until, cred_kind, cred_id, cred_expires;
  account_add->add_option("--id", acct.account_id)->required();
  account_add->add_option("--cluster", acct.cluster_id)->required();
  account_add->add_option("--group", acct.user_group)->required();
  account_add->add_option("--budget", budget_h, "Core-hours")->required();
  account_add->add_option("--max-concurrent", acct.quota.max_concurrent_jobs)->capture_default_str();
  account_add->add_option("--valid-from", valid_from, "ISO-8601, default now");
  account_add->add_option("--valid-until", valid_until, "ISO-8601")->required();
  account_add->add_option("--credential-kind", cred_kind, "KEY or TICKET, default the cluster's mode");
  account_add->add_option("--credential-id", cred_id, "Default: the account id");
  account_add->add_option("--credential-expires", cred_expires, "ISO-8601");
  auto* account_list = account->add_subcommand("list", "List robot accounts");

  // endpoint
  auto* endpoint = app.add_subcommand("endpoint", "Manage object store endpoints")->require_subcommand(1);
  auto* endpoint_add = endpoint->add_subcommand("add", "Register an object store endpoint");
  ObjectStoreEndpoint ep;
  bool ep_private = false;
  endpoint_add->add_option("--id", ep.endpoint_id)->required();
  endpoint_add->add_option("--url", ep.base_url, "file:///abs/dir")->required();
  endpoint_add->add_flag("--private", ep_private);
  endpoint_add->add_option("--credential-ref", ep.credential_ref);

  // tool
  auto* tool = app.add_subcommand("tool", "Manage tool descriptors")->require_subcommand(1);
  auto* tool_install = tool->add_subcommand("install", "Install a descriptor with its image and bundles");
  std::string descriptor_file, image_file;
  std::vector<std::string> bundle_files;
  tool_install->add_option("descriptor", descriptor_file)->required();
  tool_install->add_option("--image", image_file, "Container image file");
  tool_install->add_option("--bundle", bundle_files, "Reference bundle file (repeatable)");
  auto* tool_list = tool->add_subcommand("list", "List installed tools");

  // jobs
  auto* submit = app.add_subcommand("submit", "Submit a job spec");
  std::string spec_file, group;
  submit->add_option("spec", spec_file)->required();
  submit->add_option("--group", group)->required();
  auto* status = app.add_subcommand("status", "Show a job");
  std::string job_id;
  status->add_option("job_id", job_id)->required();
  auto* fetch = app.add_subcommand("fetch", "Copy a job's outputs and manifest");
  std::string fetch_dir;
  fetch->add_option("job_id", job_id)->required();
  fetch->add_option("dir", fetch_dir)->required();
  auto* cancel = app.add_subcommand("cancel", "Cancel a job");
  cancel->add_option("job_id", job_id)->required();
  auto* poll = app.add_subcommand("poll", "Query remote status once and advance jobs");
  auto* quota = app.add_subcommand("quota", "Show the quota ledger");

  auto* bench = app.add_subcommand("bench", "Run the phase-timing benchmark");
  std::string bench_file;
  bench->add_option("benchfile", bench_file)->required();
  auto* verify = app.add_subcommand("verify", "Compare two reproducibility manifests");
  std::string manifest_a, manifest_b;
  verify->add_option("manifest_a", manifest_a)->required();
  verify->add_option("manifest_b", manifest_b)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*verify) {
      auto a = load_manifest(read_file(manifest_a));
      auto b = load_manifest(read_file(manifest_b));
      auto report = verify_reproduction(a, b);
      out << render_report_text(report);
      return report.bit_identical ? 0 : 1;
    }
    if (*bench) {
      BenchConfig config = bench_config_from_json(parse_document(read_file(bench_file)));
      fs::path tmp = fs::temp_directory_path() / fmt::format("crossbound-bench-{}", ::getpid());
      fs::remove_all(tmp);
      BenchReport report;
      try {
        report = run_bench(config, tmp);
      } catch (...) {
        fs::remove_all(tmp);
        throw;
      }
      fs::remove_all(tmp);
      out << render_report(report);
      return 0;
    }

    if (state_dir.empty()) {
      const char* env = std::getenv("CROSSBOUND_STATE_DIR");
      state_dir = env != nullptr && *env != '\0' ? env : "./state";
    }
    Workspace ws{fs::path(state_dir)};

    if (*cluster_add) {
      if (profile.endpoint.rfind(kSimScheme, 0) != 0 || !fs::path(sim_dir(profile)).is_absolute()) {
        fail(ErrorCode::InvalidArgument, "--endpoint must be sim://<absolute dir>");
      }
      profile.auth_mode = auth_mode_from_string(auth);
      ws.clusters().add_cluster(profile);
      fs::path sim_config = sim_dir(profile) / "sim.json";
      if (!fs::exists(sim_config)) {
        SimClusterConfig sc;
        sc.cluster_id = profile.cluster_id;
        sc.slots = sim_slots;
        sc.runtime.fixed_s = sim_runtime_s;
        write_file_atomic(sim_config, dump_document(to_json(sc)));
      }
      ws.save_config();
      return 0;
    }
    if (*cluster_list) {
      for (const auto& c : ws.clusters().clusters()) {
        out << fmt::format("{} {} {} {}\n", c.cluster_id, c.endpoint, to_string(c.auth_mode), to_string(c.availability));
      }
      return 0;
    }
    if (*account_add) {
      ClusterProfile c = ws.clusters().cluster(acct.cluster_id);
      acct.quota.budget = from_core_hours(budget_h);
      acct.valid_from = parse_time_or_now(valid_from, ws.clock());
      acct.valid_until = parse_iso8601(valid_until);
      ws.clusters().add_account(acct);
      Credential cred;
      cred.kind = cred_kind.empty() ? c.auth_mode : auth_mode_from_string(cred_kind);
      cred.id = cred_id.empty() ? acct.account_id : cred_id;
      if (!cred_expires.empty()) cred.expires_at = parse_iso8601(cred_expires);
      ws.credentials().set(acct.cluster_id, cred);
      ws.save_config();
      return 0;
    }
    if (*account_list) {
      for (const auto& a : ws.clusters().accounts()) {
        out << fmt::format("{} {} {} {} {}\n", a.account_id, a.cluster_id, a.user_group, format_iso8601(a.valid_from),
                           format_iso8601(a.valid_until));
      }
      return 0;
    }
    if (*endpoint_add) {
      ep.access = ep_private ? ObjectStoreEndpoint::Access::Private : ObjectStoreEndpoint::Access::Public;
      ObjectStoreEndpoint checked = endpoint_from_json(to_json(ep));
      if (ws.endpoints().count(checked.endpoint_id) != 0) {
        fail(ErrorCode::InvalidArgument, "endpoint " + checked.endpoint_id + " already exists");
      }
      ws.endpoints()[checked.endpoint_id] = checked;
      ws.save_config();
      return 0;
    }
    if (*tool_install) {
      ToolDescriptor d = parse_descriptor(read_file(descriptor_file));
      if (!image_file.empty()) {
        std::string got = ws.artifacts().import_file(image_file);
        if (got != d.container_digest) {
          fail(ErrorCode::DigestMismatch, image_file + " hashes to " + got + ", descriptor pins " + d.container_digest);
        }
      } else if (!ws.artifacts().contains(d.container_digest)) {
        fail(ErrorCode::ArtifactMissing, "container image " + d.container_digest + " not in the store; pass --image");
      }
      for (const auto& b : bundle_files) {
        std::string got = ws.artifacts().import_file(b);
        if (std::find(d.reference_bundles.begin(), d.reference_bundles.end(), got) == d.reference_bundles.end()) {
          fail(ErrorCode::DigestMismatch, b + " (" + got + ") is not a bundle the descriptor lists");
        }
      }
      ws.tools().install(d);
      out << d.tool_id << " " << d.version << "\n";
      return 0;
    }
    if (*tool_list) {
      for (const auto& [id, version] : ws.tools().list()) out << id << " " << version << "\n";
      return 0;
    }
    if (*submit) {
      JobSpec spec = load_jobspec(read_file(spec_file));
      fs::path base = fs::absolute(spec_file).parent_path();
      for (auto& in : spec.inputs) {
        if (in.kind == DataKind::Inline && fs::path(in.local_path).is_relative()) {
          in.local_path = (base / in.local_path).lexically_normal().string();
        }
      }
      out << ws.broker().submit_job(spec, group) << "\n";
      return 0;
    }
    if (*status) {
      print_status(ws.broker().status(job_id), out);
      return 0;
    }
    if (*fetch) {
      JobRecord r = ws.broker().status(job_id);
      ReproducibilityManifest m = manifest_of(r);
      fs::path src = ws.broker().results_dir(job_id);
      fs::create_directories(fetch_dir);
      for (const auto& o : r.outputs) {
        fs::path dest = fs::path(fetch_dir) / o.name;
        fs::create_directories(dest.parent_path());
        fs::copy_file(src / o.name, dest, fs::copy_options::overwrite_existing);
      }
      write_file_atomic(fs::path(fetch_dir) / "manifest.json", dump_manifest(m));
      for (const auto& o : r.outputs) out << o.digest << "  " << o.name << "\n";
      return 0;
    }
    if (*cancel) {
      ws.broker().cancel(job_id);
      return 0;
    }
    if (*poll) {
      for (const auto& c : ws.broker().poll_once()) {
        out << fmt::format("{} {} {} -> {}\n", format_iso8601(c.at), c.job_id, to_string(c.from), to_string(c.to));
      }
      return 0;
    }
    if (*quota) {
      ws.broker();  // replays the ledger
      out << ws.clusters().quota_report();
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace crossbound
