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
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crossbound/clock.hpp"
#include "crossbound/cluster_registry.hpp"

namespace crossbound {

/// A robot credential. TICKET credentials model Kerberos-style tickets and
/// carry an expiry; KEY credentials do not expire.
struct Credential {
  AuthMode kind = AuthMode::Key;
  std::string id;
  std::optional<Timestamp> expires_at;
};

Json to_json(const Credential& c);
Credential credential_from_json(const Json& j);

enum class Direction { Put, Get };
std::string_view to_string(Direction d) noexcept;

struct TransferRecord {
  Timestamp at = 0;
  Direction direction = Direction::Put;
  std::string cluster_id;
  std::string remote_path;
  std::uint64_t bytes = 0;
  std::string digest;
};

/// Append-only record of every successful transfer, optionally mirrored to
/// a JSON-lines file.
class TransferLog {
 public:
  TransferLog() = default;
  static std::unique_ptr<TransferLog> open(const std::filesystem::path& file);

  void append(const TransferRecord& record);
  std::vector<TransferRecord> entries() const;
  std::size_t size() const;
  std::size_t count(const std::string& cluster_id, const std::string& digest, Direction direction) const;
  std::uint64_t total_bytes() const;

 private:
  mutable std::mutex mutex_;
  std::vector<TransferRecord> entries_;
  std::optional<std::filesystem::path> file_;
};

struct CommandResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

struct FetchedFile {
  std::string bytes;
  std::string digest;
};

/// Whitespace tokenizer for the remote command verbs; no quoting.
std::vector<std::string> split_command(std::string_view command);

/// Remote absolute paths mapped below a local sandbox directory.
class RemoteFs {
 public:
  explicit RemoteFs(std::filesystem::path root);

  /// RemoteIOError for relative paths or paths containing "..".
  std::filesystem::path local(const std::string& remote_path) const;

  void write_atomic(const std::string& remote_path, std::string_view bytes) const;
  std::optional<std::string> read(const std::string& remote_path) const;
  bool exists(const std::string& remote_path) const;
  void remove_all(const std::string& remote_path) const;
  void create_directories(const std::string& remote_path) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

/// Extra command verbs served by a remote site (the simulated cluster).
/// Returns nullopt for verbs it does not implement.
class CommandHandler {
 public:
  virtual ~CommandHandler() = default;
  virtual std::optional<CommandResult> handle(const std::vector<std::string>& argv) = 0;
};

enum class SessionState { Connected, Closed };

class TransportSession {
 public:
  TransportSession(std::string cluster_id, AuthMode mode, TransferLog& log, const Clock& clock);
  virtual ~TransportSession() = default;
  TransportSession(const TransportSession&) = delete;
  TransportSession& operator=(const TransportSession&) = delete;

  const std::string& cluster_id() const { return cluster_id_; }
  AuthMode auth_mode_used() const { return mode_; }
  SessionState state() const { return state_; }
  void close() { state_ = SessionState::Closed; }

  /// Whole-file atomic upload; returns the SHA-256 of `bytes`.
  std::string put_file(std::string_view bytes, const std::string& remote_path);
  FetchedFile get_file(const std::string& remote_path);
  CommandResult exec_command(const std::string& command);

 protected:
  virtual void do_put(std::string_view bytes, const std::string& remote_path) = 0;
  virtual std::optional<std::string> do_get(const std::string& remote_path) = 0;
  virtual CommandResult do_exec(const std::string& command) = 0;
  /// Called once per completed transfer, before it is logged.
  virtual void on_transfer(std::uint64_t /*bytes*/) {}

 private:
  void require_open() const;

  std::string cluster_id_;
  AuthMode mode_;
  SessionState state_ = SessionState::Connected;
  TransferLog& log_;
  const Clock& clock_;
};

class TransportBackend {
 public:
  virtual ~TransportBackend() = default;
  virtual std::unique_ptr<TransportSession> open(const ClusterProfile& profile, AuthMode mode, TransferLog& log,
                                                 const Clock& clock) = 0;
};

/// Unreachable for DOWN clusters, AuthModeMismatch when the credential kind
/// differs from the cluster's auth mode, CredentialExpired for stale tickets.
std::unique_ptr<TransportSession> connect(const ClusterProfile& profile, const Credential& credential,
                                          TransportBackend& backend, TransferLog& log, const Clock& clock);

/// Virtual transfer cost: every transfer advances the clock by
/// latency + bytes / bytes_per_second (0 means unlimited bandwidth).
struct LinkModel {
  Timestamp latency = 0;
  double bytes_per_second = 0;
};

/// Local-filesystem backend. Each cluster gets a sandbox directory standing
/// in for its filesystem; built-in verbs are `true`, `false`, `echo`,
/// `sha256 <path>`, `rm -r <path>`, `mkdir -p <path>` and `test -e <path>`.
class LocalBackend final : public TransportBackend {
 public:
  explicit LocalBackend(std::filesystem::path root);

  void attach(const std::string& cluster_id, std::filesystem::path sandbox);
  void set_handler(const std::string& cluster_id, CommandHandler* handler);
  void set_link(const std::string& cluster_id, LinkModel link, VirtualClock* clock);
  RemoteFs fs_for(const std::string& cluster_id) const;

  std::unique_ptr<TransportSession> open(const ClusterProfile& profile, AuthMode mode, TransferLog& log,
                                         const Clock& clock) override;

 private:
  struct Site {
    std::filesystem::path sandbox;
    CommandHandler* handler = nullptr;
    LinkModel link;
    VirtualClock* clock = nullptr;
  };
  Site site(const std::string& cluster_id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, Site> sites_;
};

/// Built-in verbs shared by every local site.
std::optional<CommandResult> run_builtin(const RemoteFs& fs, const std::vector<std::string>& argv);

}  // namespace crossbound
