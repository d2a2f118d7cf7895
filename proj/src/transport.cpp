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

#include "crossbound/transport.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "crossbound/digest.hpp"

namespace crossbound {
namespace fs = std::filesystem;
using namespace json_detail;

Json to_json(const Credential& c) {
  Json j{{"kind", std::string(to_string(c.kind))}, {"id", c.id}};
  if (c.expires_at) j["expires_at"] = format_iso8601(*c.expires_at);
  return j;
}

Credential credential_from_json(const Json& j) {
  expect_keys(j, "credential", {"kind", "id", "expires_at"});
  Credential c;
  c.kind = auth_mode_from_string(get_string(j, "credential", "kind"));
  c.id = get_string_or(j, "credential", "id", "");
  if (j.contains("expires_at")) c.expires_at = parse_iso8601(get_string(j, "credential", "expires_at"));
  return c;
}

std::string_view to_string(Direction d) noexcept { return d == Direction::Put ? "PUT" : "GET"; }

std::unique_ptr<TransferLog> TransferLog::open(const fs::path& file) {
  auto log = std::make_unique<TransferLog>();
  if (fs::exists(file)) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      Json j = parse_document(line);
      TransferRecord r;
      r.at = get_int(j, "transfer", "at");
      r.direction = get_string(j, "transfer", "direction") == "GET" ? Direction::Get : Direction::Put;
      r.cluster_id = get_string(j, "transfer", "cluster_id");
      r.remote_path = get_string(j, "transfer", "remote_path");
      r.bytes = get_uint(j, "transfer", "bytes");
      r.digest = get_string(j, "transfer", "digest");
      log->entries_.push_back(std::move(r));
    }
  } else if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
  log->file_ = file;
  return log;
}

void TransferLog::append(const TransferRecord& record) {
  std::lock_guard lock(mutex_);
  if (file_) {
    Json j{{"at", record.at},       {"direction", std::string(to_string(record.direction))},
           {"cluster_id", record.cluster_id}, {"remote_path", record.remote_path},
           {"bytes", record.bytes}, {"digest", record.digest}};
    std::ofstream out(*file_, std::ios::app);
    out << j.dump() << '\n';
    out.flush();
    if (!out) fail(ErrorCode::Persistence, "cannot append to " + file_->string());
  }
  entries_.push_back(record);
}

std::vector<TransferRecord> TransferLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t TransferLog::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t TransferLog::count(const std::string& cluster_id, const std::string& digest, Direction direction) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const TransferRecord& r) {
    return r.cluster_id == cluster_id && r.digest == digest && r.direction == direction;
  }));
}

std::uint64_t TransferLog::total_bytes() const {
  std::lock_guard lock(mutex_);
  std::uint64_t total = 0;
  for (const auto& r : entries_) total += r.bytes;
  return total;
}

std::vector<std::string> split_command(std::string_view command) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < command.size()) {
    while (i < command.size() && std::isspace(static_cast<unsigned char>(command[i]))) ++i;
    std::size_t start = i;
    while (i < command.size() && !std::isspace(static_cast<unsigned char>(command[i]))) ++i;
    if (i > start) out.emplace_back(command.substr(start, i - start));
  }
  return out;
}

RemoteFs::RemoteFs(fs::path root) : root_(std::move(root)) {}

fs::path RemoteFs::local(const std::string& remote_path) const {
  if (remote_path.empty() || remote_path.front() != '/') fail(ErrorCode::RemoteIOError, "remote path must be absolute: '" + remote_path + "'");
  fs::path out = root_;
  for (const auto& part : fs::path(remote_path).relative_path()) {
    if (part == ".." || part == ".") fail(ErrorCode::RemoteIOError, "remote path may not contain '.' or '..': " + remote_path);
    if (part.empty()) continue;
    out /= part;
  }
  return out;
}

void RemoteFs::write_atomic(const std::string& remote_path, std::string_view bytes) const {
  static std::atomic<std::uint64_t> counter{0};
  fs::path target = local(remote_path);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) fail(ErrorCode::RemoteIOError, "cannot create " + target.parent_path().string() + ": " + ec.message());
  fs::path tmp = target;
  tmp += ".partial." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::RemoteIOError, "write failed: " + remote_path);
  }
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCode::RemoteIOError, "rename failed for " + remote_path + ": " + ec.message());
}

std::optional<std::string> RemoteFs::read(const std::string& remote_path) const {
  fs::path p = local(remote_path);
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

bool RemoteFs::exists(const std::string& remote_path) const {
  std::error_code ec;
  return fs::exists(local(remote_path), ec);
}

void RemoteFs::remove_all(const std::string& remote_path) const {
  std::error_code ec;
  fs::remove_all(local(remote_path), ec);
  if (ec) fail(ErrorCode::RemoteIOError, "cannot remove " + remote_path + ": " + ec.message());
}

void RemoteFs::create_directories(const std::string& remote_path) const {
  std::error_code ec;
  fs::create_directories(local(remote_path), ec);
  if (ec) fail(ErrorCode::RemoteIOError, "cannot create " + remote_path + ": " + ec.message());
}

TransportSession::TransportSession(std::string cluster_id, AuthMode mode, TransferLog& log, const Clock& clock)
    : cluster_id_(std::move(cluster_id)), mode_(mode), log_(log), clock_(clock) {}

void TransportSession::require_open() const {
  if (state_ != SessionState::Connected) fail(ErrorCode::SessionClosed, "session to " + cluster_id_ + " is closed");
}

std::string TransportSession::put_file(std::string_view bytes, const std::string& remote_path) {
  require_open();
  do_put(bytes, remote_path);
  std::string digest = sha256_hex(bytes);
  on_transfer(bytes.size());
  log_.append({clock_.now(), Direction::Put, cluster_id_, remote_path, bytes.size(), digest});
  return digest;
}

FetchedFile TransportSession::get_file(const std::string& remote_path) {
  require_open();
  auto bytes = do_get(remote_path);
  if (!bytes) fail(ErrorCode::NotFound, "no remote file " + remote_path + " on " + cluster_id_);
  FetchedFile f{std::move(*bytes), {}};
  f.digest = sha256_hex(f.bytes);
  on_transfer(f.bytes.size());
  log_.append({clock_.now(), Direction::Get, cluster_id_, remote_path, f.bytes.size(), f.digest});
  return f;
}

CommandResult TransportSession::exec_command(const std::string& command) {
  require_open();
  return do_exec(command);
}

std::unique_ptr<TransportSession> connect(const ClusterProfile& profile, const Credential& credential,
                                          TransportBackend& backend, TransferLog& log, const Clock& clock) {
  if (profile.availability == Availability::Down) fail(ErrorCode::Unreachable, "cluster " + profile.cluster_id + " is DOWN");
  if (credential.kind != profile.auth_mode) {
    fail(ErrorCode::AuthModeMismatch, std::string(to_string(credential.kind)) + " credential offered to " +
                                          profile.cluster_id + ", which only accepts " +
                                          std::string(to_string(profile.auth_mode)));
  }
  if (credential.expires_at && clock.now() >= *credential.expires_at) {
    fail(ErrorCode::CredentialExpired, "ticket '" + credential.id + "' expired at " + format_iso8601(*credential.expires_at));
  }
  return backend.open(profile, credential.kind, log, clock);
}

std::optional<CommandResult> run_builtin(const RemoteFs& fs, const std::vector<std::string>& argv) {
  if (argv.empty()) return CommandResult{0, "", ""};
  const std::string& verb = argv[0];
  auto usage = [&](const std::string& text) { return CommandResult{2, "", verb + ": usage: " + text + "\n"}; };
  try {
    if (verb == "true") return CommandResult{0, "", ""};
    if (verb == "false") return CommandResult{1, "", ""};
    if (verb == "echo") {
      std::string out;
      for (std::size_t i = 1; i < argv.size(); ++i) out += (i > 1 ? " " : "") + argv[i];
      return CommandResult{0, out + "\n", ""};
    }
    if (verb == "sha256") {
      if (argv.size() != 2) return usage("sha256 <path>");
      fs::path p = fs.local(argv[1]);
      std::error_code ec;
      if (!fs::is_regular_file(p, ec)) return CommandResult{1, "", "sha256: " + argv[1] + ": No such file\n"};
      return CommandResult{0, sha256_file(p) + "  " + argv[1] + "\n", ""};
    }
    if (verb == "rm") {
      if (argv.size() != 3 || argv[1] != "-r") return usage("rm -r <path>");
      fs.remove_all(argv[2]);
      return CommandResult{0, "", ""};
    }
    if (verb == "mkdir") {
      if (argv.size() != 3 || argv[1] != "-p") return usage("mkdir -p <path>");
      fs.create_directories(argv[2]);
      return CommandResult{0, "", ""};
    }
    if (verb == "test") {
      if (argv.size() != 3 || argv[1] != "-e") return usage("test -e <path>");
      return CommandResult{fs.exists(argv[2]) ? 0 : 1, "", ""};
    }
  } catch (const Error& e) {
    return CommandResult{1, "", verb + ": " + e.what() + "\n"};
  }
  return std::nullopt;
}

namespace {

class LocalSession final : public TransportSession {
 public:
  LocalSession(std::string cluster_id, AuthMode mode, TransferLog& log, const Clock& clock, RemoteFs fs,
               CommandHandler* handler, LinkModel link, VirtualClock* vclock)
      : TransportSession(std::move(cluster_id), mode, log, clock),
        fs_(std::move(fs)),
        handler_(handler),
        link_(link),
        vclock_(vclock) {}

 protected:
  void do_put(std::string_view bytes, const std::string& remote_path) override { fs_.write_atomic(remote_path, bytes); }

  std::optional<std::string> do_get(const std::string& remote_path) override { return fs_.read(remote_path); }

  CommandResult do_exec(const std::string& command) override {
    auto argv = split_command(command);
    if (handler_ != nullptr && !argv.empty()) {
      if (auto r = handler_->handle(argv)) return *r;
    }
    if (auto r = run_builtin(fs_, argv)) return *r;
    return CommandResult{127, "", argv[0] + ": command not found\n"};
  }

  void on_transfer(std::uint64_t bytes) override {
    if (vclock_ == nullptr) return;
    Timestamp cost = link_.latency;
    if (link_.bytes_per_second > 0) {
      cost += static_cast<Timestamp>(std::ceil(static_cast<double>(bytes) / link_.bytes_per_second * kMicrosPerSecond));
    }
    vclock_->advance_by(cost);
  }

 private:
  RemoteFs fs_;
  CommandHandler* handler_;
  LinkModel link_;
  VirtualClock* vclock_;
};

}  // namespace

LocalBackend::LocalBackend(fs::path root) : root_(std::move(root)) {}

void LocalBackend::attach(const std::string& cluster_id, fs::path sandbox) {
  std::lock_guard lock(mutex_);
  sites_[cluster_id].sandbox = std::move(sandbox);
}

void LocalBackend::set_handler(const std::string& cluster_id, CommandHandler* handler) {
  std::lock_guard lock(mutex_);
  auto& s = sites_[cluster_id];
  if (s.sandbox.empty()) s.sandbox = root_ / cluster_id;
  s.handler = handler;
}

void LocalBackend::set_link(const std::string& cluster_id, LinkModel link, VirtualClock* clock) {
  std::lock_guard lock(mutex_);
  auto& s = sites_[cluster_id];
  if (s.sandbox.empty()) s.sandbox = root_ / cluster_id;
  s.link = link;
  s.clock = clock;
}

LocalBackend::Site LocalBackend::site(const std::string& cluster_id) const {
  std::lock_guard lock(mutex_);
  auto it = sites_.find(cluster_id);
  if (it != sites_.end() && !it->second.sandbox.empty()) return it->second;
  Site s;
  s.sandbox = root_ / cluster_id;
  return s;
}

RemoteFs LocalBackend::fs_for(const std::string& cluster_id) const { return RemoteFs(site(cluster_id).sandbox); }

std::unique_ptr<TransportSession> LocalBackend::open(const ClusterProfile& profile, AuthMode mode, TransferLog& log,
                                                     const Clock& clock) {
  Site s = site(profile.cluster_id);
  std::error_code ec;
  fs::create_directories(s.sandbox, ec);
  if (ec) fail(ErrorCode::Unreachable, "sandbox for " + profile.cluster_id + " unavailable: " + ec.message());
  return std::make_unique<LocalSession>(profile.cluster_id, mode, log, clock, RemoteFs(s.sandbox), s.handler, s.link,
                                        s.clock);
}

}  // namespace crossbound
