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

#include "crossbound/cluster_registry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>

#include "crossbound/validate.hpp"

namespace crossbound {

using namespace json_detail;

std::string_view to_string(AuthMode m) noexcept { return m == AuthMode::Key ? "KEY" : "TICKET"; }
std::string_view to_string(QueueKind q) noexcept { return q == QueueKind::SlurmLike ? "SLURM_LIKE" : "SHELL"; }
std::string_view to_string(Availability a) noexcept { return a == Availability::Up ? "UP" : "DOWN"; }

AuthMode auth_mode_from_string(std::string_view s) {
  if (s == "KEY") return AuthMode::Key;
  if (s == "TICKET") return AuthMode::Ticket;
  fail(ErrorCode::InvalidArgument, "auth mode must be KEY or TICKET, got '" + std::string(s) + "'");
}

QueueKind queue_kind_from_string(std::string_view s) {
  if (s == "SLURM_LIKE") return QueueKind::SlurmLike;
  if (s == "SHELL") return QueueKind::Shell;
  fail(ErrorCode::InvalidArgument, "queue kind must be SLURM_LIKE or SHELL, got '" + std::string(s) + "'");
}

Availability availability_from_string(std::string_view s) {
  if (s == "UP") return Availability::Up;
  if (s == "DOWN") return Availability::Down;
  fail(ErrorCode::InvalidArgument, "availability must be UP or DOWN, got '" + std::string(s) + "'");
}

std::string_view to_string(IneligibleCause c) noexcept {
  switch (c) {
    case IneligibleCause::ClusterDown: return "all candidate clusters DOWN";
    case IneligibleCause::CapabilityMismatch: return "capability mismatch";
    case IneligibleCause::NoAccount: return "no robot account for group";
    case IneligibleCause::AccountExpired: return "account expired";
    case IneligibleCause::ConcurrencyLimit: return "concurrency limit reached";
    case IneligibleCause::QuotaExhausted: return "quota exhausted";
  }
  return "unknown";
}

void ClusterProfile::validate() const {
  if (!is_valid_name(cluster_id)) fail(ErrorCode::InvalidArgument, "cluster id '" + cluster_id + "' is invalid");
  if (scratch_root.empty() || scratch_root.front() != '/') {
    fail(ErrorCode::InvalidArgument, "scratch_root of " + cluster_id + " must be absolute");
  }
  if (scratch_root.size() > 1 && scratch_root.back() == '/') {
    fail(ErrorCode::InvalidArgument, "scratch_root of " + cluster_id + " must not end in '/'");
  }
  if (capabilities.max_cpus == 0 || capabilities.max_mem_mb == 0 || capabilities.max_walltime_s == 0) {
    fail(ErrorCode::InvalidArgument, "capability bounds of " + cluster_id + " must be positive");
  }
  if (container_runtime_cmd.empty() || container_runtime_cmd.find_first_of(" \t\n") != std::string::npos) {
    fail(ErrorCode::InvalidArgument, "container runtime command must be a single word");
  }
}

CoreSeconds from_core_hours(double hours) {
  if (!(hours >= 0) || !std::isfinite(hours)) fail(ErrorCode::InvalidArgument, "core-hour budget must be non-negative");
  return static_cast<CoreSeconds>(std::llround(hours * 3600.0));
}

bool check_validity(const RobotAccount& account, Timestamp now) {
  return account.valid_from <= now && now < account.valid_until;
}

Json to_json(const Reservation& r) {
  return Json{{"reservation_id", r.reservation_id}, {"account_id", r.account_id}, {"cpus", r.cpus},
              {"walltime_s", r.walltime_s},         {"core_seconds", r.amount}};
}

Reservation reservation_from_json(const Json& j) {
  expect_keys(j, "reservation", {"reservation_id", "account_id", "cpus", "walltime_s", "core_seconds"});
  Reservation r;
  r.reservation_id = get_string(j, "reservation", "reservation_id");
  r.account_id = get_string(j, "reservation", "account_id");
  r.cpus = static_cast<std::uint32_t>(get_uint(j, "reservation", "cpus"));
  r.walltime_s = get_uint(j, "reservation", "walltime_s");
  r.amount = get_int(j, "reservation", "core_seconds");
  return r;
}

void ClusterRegistry::add_cluster(const ClusterProfile& profile) {
  profile.validate();
  std::unique_lock lock(mutex_);
  if (clusters_.contains(profile.cluster_id)) fail(ErrorCode::DuplicateCluster, "cluster '" + profile.cluster_id + "' exists");
  clusters_.emplace(profile.cluster_id, profile);
}

void ClusterRegistry::set_availability(const std::string& cluster_id, Availability availability) {
  std::unique_lock lock(mutex_);
  auto it = clusters_.find(cluster_id);
  if (it == clusters_.end()) fail(ErrorCode::UnknownCluster, "no cluster '" + cluster_id + "'");
  it->second.availability = availability;
}

void ClusterRegistry::add_account(const RobotAccount& account) {
  if (!is_valid_name(account.account_id)) fail(ErrorCode::InvalidArgument, "account id '" + account.account_id + "' is invalid");
  if (account.user_group.empty()) fail(ErrorCode::InvalidArgument, "account needs a user group");
  if (!(account.valid_from < account.valid_until)) fail(ErrorCode::InvalidArgument, "valid_from must precede valid_until");
  if (account.quota.max_concurrent_jobs == 0) fail(ErrorCode::InvalidArgument, "max_concurrent_jobs must be positive");
  if (account.quota.budget < 0) fail(ErrorCode::InvalidArgument, "budget must be non-negative");
  std::unique_lock lock(mutex_);
  if (!clusters_.contains(account.cluster_id)) fail(ErrorCode::UnknownCluster, "no cluster '" + account.cluster_id + "'");
  if (accounts_.contains(account.account_id)) fail(ErrorCode::DuplicateAccount, "account '" + account.account_id + "' exists");
  for (const auto& [_, s] : accounts_) {
    if (s->account.cluster_id == account.cluster_id && s->account.user_group == account.user_group) {
      fail(ErrorCode::DuplicateAccount, "group '" + account.user_group + "' already has an account on " + account.cluster_id);
    }
  }
  auto s = std::make_unique<AccountSlot>();
  s->account = account;
  s->account.quota.reserved = 0;
  s->account.quota.active_jobs = 0;
  accounts_.emplace(account.account_id, std::move(s));
}

ClusterProfile ClusterRegistry::cluster(const std::string& cluster_id) const {
  std::shared_lock lock(mutex_);
  auto it = clusters_.find(cluster_id);
  if (it == clusters_.end()) fail(ErrorCode::UnknownCluster, "no cluster '" + cluster_id + "'");
  return it->second;
}

ClusterRegistry::AccountSlot& ClusterRegistry::slot(const std::string& account_id) const {
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) fail(ErrorCode::UnknownAccount, "no account '" + account_id + "'");
  return *it->second;
}

RobotAccount ClusterRegistry::account(const std::string& account_id) const {
  std::shared_lock lock(mutex_);
  auto& s = slot(account_id);
  std::lock_guard guard(s.mutex);
  return s.account;
}

std::vector<ClusterProfile> ClusterRegistry::clusters() const {
  std::shared_lock lock(mutex_);
  std::vector<ClusterProfile> out;
  for (const auto& [_, c] : clusters_) out.push_back(c);
  return out;
}

std::vector<RobotAccount> ClusterRegistry::accounts() const {
  std::shared_lock lock(mutex_);
  std::vector<RobotAccount> out;
  for (const auto& [_, s] : accounts_) {
    std::lock_guard guard(s->mutex);
    out.push_back(s->account);
  }
  return out;
}

std::optional<RobotAccount> ClusterRegistry::account_for(const std::string& cluster_id, const std::string& group) const {
  std::shared_lock lock(mutex_);
  for (const auto& [_, s] : accounts_) {
    std::lock_guard guard(s->mutex);
    if (s->account.cluster_id == cluster_id && s->account.user_group == group) return s->account;
  }
  return std::nullopt;
}

Selection ClusterRegistry::select_cluster(const ValidatedJob& job, const std::string& group, Timestamp now) const {
  return select_cluster(job.resources, group, now);
}

Selection ClusterRegistry::select_cluster(const ResourceRequest& resources, const std::string& group, Timestamp now) const {
  std::shared_lock lock(mutex_);
  if (clusters_.empty()) throw SelectionError(IneligibleCause::ClusterDown, "no clusters registered");

  std::optional<Selection> best;
  IneligibleCause furthest = IneligibleCause::ClusterDown;
  std::vector<std::string> reasons;
  const CoreSeconds need = resources.core_seconds();

  for (const auto& [id, cluster] : clusters_) {  // map order = lexicographic id
    auto reject = [&](IneligibleCause cause) {
      furthest = std::max(furthest, cause);
      reasons.push_back(id + ": " + std::string(to_string(cause)));
    };
    if (cluster.availability == Availability::Down) {
      reject(IneligibleCause::ClusterDown);
      continue;
    }
    if (!cluster.capabilities.dominates(resources)) {
      reject(IneligibleCause::CapabilityMismatch);
      continue;
    }
    const AccountSlot* found = nullptr;
    for (const auto& [_, s] : accounts_) {
      if (s->account.cluster_id == id && s->account.user_group == group) found = s.get();
    }
    if (found == nullptr) {
      reject(IneligibleCause::NoAccount);
      continue;
    }
    RobotAccount acct;
    {
      std::lock_guard guard(found->mutex);
      acct = found->account;
    }
    if (!check_validity(acct, now)) {
      reject(IneligibleCause::AccountExpired);
      continue;
    }
    if (acct.quota.active_jobs >= acct.quota.max_concurrent_jobs) {
      reject(IneligibleCause::ConcurrencyLimit);
      continue;
    }
    if (acct.quota.headroom() < need) {
      reject(IneligibleCause::QuotaExhausted);
      continue;
    }
    if (!best || acct.quota.active_jobs < best->account.quota.active_jobs) best = Selection{cluster, acct};
  }
  if (!best) {
    std::string detail;
    for (const auto& r : reasons) detail += (detail.empty() ? "" : "; ") + r;
    throw SelectionError(furthest, "group '" + group + "': " + detail);
  }
  return *best;
}

Reservation ClusterRegistry::reserve(const std::string& account_id, const ResourceRequest& resources, Timestamp now,
                                     const std::string& reservation_id) {
  resources.validate();
  std::shared_lock lock(mutex_);
  auto& s = slot(account_id);
  std::lock_guard guard(s.mutex);
  auto& q = s.account.quota;
  if (!check_validity(s.account, now)) fail(ErrorCode::AccountExpired, "account '" + account_id + "' is outside its validity window");
  if (q.active_jobs >= q.max_concurrent_jobs) {
    fail(ErrorCode::ConcurrencyLimit, fmt::format("account '{}' already runs {} of {} jobs", account_id, q.active_jobs,
                                                  q.max_concurrent_jobs));
  }
  const CoreSeconds need = resources.core_seconds();
  if (q.headroom() < need) {
    fail(ErrorCode::QuotaExceeded, fmt::format("account '{}' needs {:.2f} core-hours, {:.2f} remain", account_id,
                                               to_core_hours(need), to_core_hours(q.headroom())));
  }
  Reservation r{reservation_id, account_id, resources.cpus, resources.walltime_s, need};
  {
    std::lock_guard out_guard(outstanding_mutex_);
    if (!outstanding_.emplace(reservation_id, r).second) {
      fail(ErrorCode::InvalidArgument, "reservation '" + reservation_id + "' already outstanding");
    }
  }
  q.reserved += need;
  q.active_jobs += 1;
  return r;
}

Settlement ClusterRegistry::settle(const std::string& reservation_id, std::uint64_t actual_runtime_s) {
  std::shared_lock lock(mutex_);
  std::string account_id;
  {
    std::lock_guard out_guard(outstanding_mutex_);
    auto it = outstanding_.find(reservation_id);
    if (it == outstanding_.end()) fail(ErrorCode::UnknownReservation, "no outstanding reservation '" + reservation_id + "'");
    account_id = it->second.account_id;
  }
  auto& s = slot(account_id);
  std::lock_guard guard(s.mutex);
  Reservation r;
  {
    std::lock_guard out_guard(outstanding_mutex_);
    auto it = outstanding_.find(reservation_id);
    if (it == outstanding_.end()) fail(ErrorCode::UnknownReservation, "reservation '" + reservation_id + "' already settled");
    r = it->second;
    outstanding_.erase(it);
  }
  const CoreSeconds charged =
      static_cast<CoreSeconds>(r.cpus) * static_cast<CoreSeconds>(std::min<std::uint64_t>(actual_runtime_s, r.walltime_s));
  auto& q = s.account.quota;
  q.reserved -= r.amount;
  q.spent += charged;
  q.active_jobs -= 1;
  return Settlement{reservation_id, account_id, r.amount, charged};
}

bool ClusterRegistry::is_outstanding(const std::string& reservation_id) const {
  std::lock_guard out_guard(outstanding_mutex_);
  return outstanding_.contains(reservation_id);
}

std::vector<Reservation> ClusterRegistry::outstanding() const {
  std::lock_guard out_guard(outstanding_mutex_);
  std::vector<Reservation> out;
  for (const auto& [_, r] : outstanding_) out.push_back(r);
  return out;
}

void ClusterRegistry::restore_reservation(const Reservation& r) {
  std::shared_lock lock(mutex_);
  auto& s = slot(r.account_id);
  std::lock_guard guard(s.mutex);
  {
    std::lock_guard out_guard(outstanding_mutex_);
    if (!outstanding_.emplace(r.reservation_id, r).second) {
      fail(ErrorCode::CorruptStore, "reservation '" + r.reservation_id + "' restored twice");
    }
  }
  s.account.quota.reserved += r.amount;
  s.account.quota.active_jobs += 1;
}

void ClusterRegistry::restore_settlement(const Reservation& r, CoreSeconds charged) {
  std::shared_lock lock(mutex_);
  auto& s = slot(r.account_id);
  std::lock_guard guard(s.mutex);
  s.account.quota.spent += charged;
}

std::string ClusterRegistry::quota_report() const {
  std::vector<std::array<std::string, 6>> rows;
  rows.push_back({"GROUP", "CLUSTER", "BUDGET", "RESERVED", "SPENT", "ACTIVE"});
  auto accts = accounts();
  std::sort(accts.begin(), accts.end(), [](const RobotAccount& a, const RobotAccount& b) {
    return std::tie(a.user_group, a.cluster_id) < std::tie(b.user_group, b.cluster_id);
  });
  for (const auto& a : accts) {
    rows.push_back({a.user_group, a.cluster_id, fmt::format("{:.2f}", to_core_hours(a.quota.budget)),
                    fmt::format("{:.2f}", to_core_hours(a.quota.reserved)),
                    fmt::format("{:.2f}", to_core_hours(a.quota.spent)), std::to_string(a.quota.active_jobs)});
  }
  std::array<std::size_t, 6> width{};
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      // text columns left-aligned, numbers right-aligned
      line += i < 2 ? fmt::format("{:<{}}", row[i], width[i]) : fmt::format("{:>{}}", row[i], width[i]);
      if (i + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

Json to_json(const ClusterProfile& p) {
  Json j;
  j["cluster_id"] = p.cluster_id;
  j["endpoint"] = p.endpoint;
  j["auth_mode"] = std::string(to_string(p.auth_mode));
  j["queue_kind"] = std::string(to_string(p.queue_kind));
  j["scratch_root"] = p.scratch_root;
  j["capabilities"] = Json{{"max_cpus", p.capabilities.max_cpus},
                           {"max_mem_mb", p.capabilities.max_mem_mb},
                           {"gpus_total", p.capabilities.gpus_total},
                           {"max_walltime_s", p.capabilities.max_walltime_s}};
  j["container_runtime_cmd"] = p.container_runtime_cmd;
  j["availability"] = std::string(to_string(p.availability));
  return j;
}

ClusterProfile cluster_from_json(const Json& j) {
  constexpr std::string_view kWhat = "cluster";
  expect_keys(j, kWhat,
              {"cluster_id", "endpoint", "auth_mode", "queue_kind", "scratch_root", "capabilities",
               "container_runtime_cmd", "availability"});
  ClusterProfile p;
  p.cluster_id = get_string(j, kWhat, "cluster_id");
  p.endpoint = get_string(j, kWhat, "endpoint");
  p.auth_mode = auth_mode_from_string(get_string(j, kWhat, "auth_mode"));
  p.queue_kind = queue_kind_from_string(get_string_or(j, kWhat, "queue_kind", "SLURM_LIKE"));
  p.scratch_root = get_string(j, kWhat, "scratch_root");
  const Json& caps = require(j, kWhat, "capabilities");
  expect_keys(caps, "capabilities", {"max_cpus", "max_mem_mb", "gpus_total", "max_walltime_s"});
  p.capabilities.max_cpus = static_cast<std::uint32_t>(get_uint(caps, "capabilities", "max_cpus"));
  p.capabilities.max_mem_mb = get_uint(caps, "capabilities", "max_mem_mb");
  p.capabilities.gpus_total = static_cast<std::uint32_t>(get_uint(caps, "capabilities", "gpus_total"));
  p.capabilities.max_walltime_s = get_uint(caps, "capabilities", "max_walltime_s");
  p.container_runtime_cmd = get_string_or(j, kWhat, "container_runtime_cmd", "singularity");
  p.availability = availability_from_string(get_string_or(j, kWhat, "availability", "UP"));
  p.validate();
  return p;
}

Json to_json(const RobotAccount& a) {
  Json j;
  j["account_id"] = a.account_id;
  j["cluster_id"] = a.cluster_id;
  j["user_group"] = a.user_group;
  j["core_hour_budget"] = to_core_hours(a.quota.budget);
  j["max_concurrent_jobs"] = a.quota.max_concurrent_jobs;
  j["valid_from"] = format_iso8601(a.valid_from);
  j["valid_until"] = format_iso8601(a.valid_until);
  return j;
}

RobotAccount account_from_json(const Json& j) {
  constexpr std::string_view kWhat = "account";
  expect_keys(j, kWhat,
              {"account_id", "cluster_id", "user_group", "core_hour_budget", "max_concurrent_jobs", "valid_from",
               "valid_until"});
  RobotAccount a;
  a.account_id = get_string(j, kWhat, "account_id");
  a.cluster_id = get_string(j, kWhat, "cluster_id");
  a.user_group = get_string(j, kWhat, "user_group");
  const Json& budget = require(j, kWhat, "core_hour_budget");
  if (!budget.is_number()) fail(ErrorCode::InvalidArgument, "account.core_hour_budget must be a number");
  a.quota.budget = from_core_hours(budget.get<double>());
  a.quota.max_concurrent_jobs = static_cast<std::uint32_t>(get_uint(j, kWhat, "max_concurrent_jobs"));
  a.valid_from = parse_iso8601(get_string(j, kWhat, "valid_from"));
  a.valid_until = parse_iso8601(get_string(j, kWhat, "valid_until"));
  return a;
}

Json ClusterRegistry::to_json() const {
  Json clusters = Json::array();
  for (const auto& c : this->clusters()) clusters.push_back(crossbound::to_json(c));
  Json accounts = Json::array();
  for (const auto& a : this->accounts()) accounts.push_back(crossbound::to_json(a));
  return Json{{"clusters", clusters}, {"accounts", accounts}};
}

void ClusterRegistry::load_into(ClusterRegistry& registry, const Json& j) {
  if (j.contains("clusters")) {
    for (const auto& c : j.at("clusters")) registry.add_cluster(cluster_from_json(c));
  }
  if (j.contains("accounts")) {
    for (const auto& a : j.at("accounts")) registry.add_account(account_from_json(a));
  }
}

}  // namespace crossbound
