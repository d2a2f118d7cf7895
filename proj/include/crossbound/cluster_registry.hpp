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
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "crossbound/clock.hpp"
#include "crossbound/codec.hpp"
#include "crossbound/error.hpp"
#include "crossbound/model.hpp"

namespace crossbound {

struct ValidatedJob;

enum class AuthMode { Key, Ticket };
enum class QueueKind { SlurmLike, Shell };
enum class Availability { Up, Down };

std::string_view to_string(AuthMode m) noexcept;
std::string_view to_string(QueueKind q) noexcept;
std::string_view to_string(Availability a) noexcept;
AuthMode auth_mode_from_string(std::string_view s);
QueueKind queue_kind_from_string(std::string_view s);
Availability availability_from_string(std::string_view s);

struct Capabilities {
  std::uint32_t max_cpus = 1;
  std::uint64_t max_mem_mb = 1;
  std::uint32_t gpus_total = 0;
  std::uint64_t max_walltime_s = 1;

  bool dominates(const ResourceRequest& r) const {
    return r.cpus <= max_cpus && r.mem_mb <= max_mem_mb && r.gpus <= gpus_total && r.walltime_s <= max_walltime_s;
  }
  friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

struct ClusterProfile {
  std::string cluster_id;
  std::string endpoint;
  AuthMode auth_mode = AuthMode::Key;
  QueueKind queue_kind = QueueKind::SlurmLike;
  std::string scratch_root;
  Capabilities capabilities;
  std::string container_runtime_cmd = "singularity";
  Availability availability = Availability::Up;

  void validate() const;
  friend bool operator==(const ClusterProfile&, const ClusterProfile&) = default;
};

/// Quota is kept in integer core-seconds so the ledger is exact; core-hours
/// are a presentation unit.
using CoreSeconds = std::int64_t;

constexpr double to_core_hours(CoreSeconds cs) { return static_cast<double>(cs) / 3600.0; }
CoreSeconds from_core_hours(double hours);

struct QuotaState {
  CoreSeconds budget = 0;
  CoreSeconds reserved = 0;
  CoreSeconds spent = 0;
  std::uint32_t max_concurrent_jobs = 1;
  std::uint32_t active_jobs = 0;

  CoreSeconds headroom() const { return budget - reserved - spent; }
  friend bool operator==(const QuotaState&, const QuotaState&) = default;
};

struct RobotAccount {
  std::string account_id;
  std::string cluster_id;
  std::string user_group;
  QuotaState quota;
  Timestamp valid_from = 0;
  Timestamp valid_until = 0;

  friend bool operator==(const RobotAccount&, const RobotAccount&) = default;
};

/// Half-open validity window [valid_from, valid_until).
bool check_validity(const RobotAccount& account, Timestamp now);

struct Reservation {
  std::string reservation_id;
  std::string account_id;
  std::uint32_t cpus = 0;
  std::uint64_t walltime_s = 0;
  CoreSeconds amount = 0;

  friend bool operator==(const Reservation&, const Reservation&) = default;
};

struct Settlement {
  std::string reservation_id;
  std::string account_id;
  CoreSeconds released = 0;
  CoreSeconds charged = 0;
};

Json to_json(const Reservation& r);
Reservation reservation_from_json(const Json& j);

enum class IneligibleCause {
  ClusterDown,
  CapabilityMismatch,
  NoAccount,
  AccountExpired,
  ConcurrencyLimit,
  QuotaExhausted,
};

std::string_view to_string(IneligibleCause c) noexcept;

/// NoEligibleCluster with the sub-cause of the candidate that got furthest
/// through the eligibility checks.
class SelectionError : public Error {
 public:
  SelectionError(IneligibleCause cause, const std::string& detail)
      : Error(ErrorCode::NoEligibleCluster, std::string(to_string(cause)) + ": " + detail), cause_(cause) {}
  IneligibleCause cause() const noexcept { return cause_; }

 private:
  IneligibleCause cause_;
};

struct Selection {
  ClusterProfile cluster;
  RobotAccount account;
};

/// Clusters, robot accounts and the quota ledger. Structural changes take an
/// exclusive lock; quota mutations are serialized per account.
class ClusterRegistry {
 public:
  ClusterRegistry() = default;
  ClusterRegistry(const ClusterRegistry&) = delete;
  ClusterRegistry& operator=(const ClusterRegistry&) = delete;

  void add_cluster(const ClusterProfile& profile);
  void set_availability(const std::string& cluster_id, Availability availability);
  void add_account(const RobotAccount& account);

  ClusterProfile cluster(const std::string& cluster_id) const;
  RobotAccount account(const std::string& account_id) const;
  std::vector<ClusterProfile> clusters() const;
  std::vector<RobotAccount> accounts() const;
  std::optional<RobotAccount> account_for(const std::string& cluster_id, const std::string& group) const;

  /// Eligible = UP, capabilities dominate the request, and the group holds a
  /// valid account with concurrency and quota headroom for the reservation.
  /// Least active jobs wins, then the smaller cluster id.
  Selection select_cluster(const ResourceRequest& resources, const std::string& group, Timestamp now) const;
  Selection select_cluster(const ValidatedJob& job, const std::string& group, Timestamp now) const;

  /// reserved += cpus × walltime_s; active_jobs += 1.
  Reservation reserve(const std::string& account_id, const ResourceRequest& resources, Timestamp now,
                      const std::string& reservation_id);

  /// Releases the reservation and charges cpus × min(actual, walltime).
  Settlement settle(const std::string& reservation_id, std::uint64_t actual_runtime_s);

  bool is_outstanding(const std::string& reservation_id) const;
  std::vector<Reservation> outstanding() const;

  // Recovery replay: re-apply ledger events without the admission checks.
  void restore_reservation(const Reservation& reservation);
  void restore_settlement(const Reservation& reservation, CoreSeconds charged);

  /// `GROUP CLUSTER BUDGET RESERVED SPENT ACTIVE`, core-hours with two decimals.
  std::string quota_report() const;

  /// {"clusters": [...], "accounts": [...]} with static definitions only;
  /// reserved/spent/active are runtime state rebuilt from job logs.
  Json to_json() const;
  static void load_into(ClusterRegistry& registry, const Json& j);

 private:
  struct AccountSlot {
    RobotAccount account;
    mutable std::mutex mutex;
  };

  AccountSlot& slot(const std::string& account_id) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, ClusterProfile> clusters_;
  std::map<std::string, std::unique_ptr<AccountSlot>> accounts_;
  std::map<std::string, Reservation> outstanding_;
  mutable std::mutex outstanding_mutex_;
};

Json to_json(const ClusterProfile& p);
ClusterProfile cluster_from_json(const Json& j);
Json to_json(const RobotAccount& a);
RobotAccount account_from_json(const Json& j);

}  // namespace crossbound
