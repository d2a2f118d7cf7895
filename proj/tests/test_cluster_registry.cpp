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


#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include "crossbound/cluster_registry.hpp"
#include "crossbound/error.hpp"
#include "support.hpp"

using namespace crossbound;
using crossbound::testing::kEpoch;

namespace {

ClusterProfile cluster(const std::string& id, std::uint32_t gpus = 0) {
  ClusterProfile p;
  p.cluster_id = id;
  p.endpoint = "sim://" + id;
  p.scratch_root = "/scratch";
  p.capabilities = {32, 128 * 1024, gpus, 48 * 3600};
  return p;
}

RobotAccount account(const std::string& id, const std::string& cluster_id, const std::string& group,
                     double budget_h = 1000, std::uint32_t max_jobs = 8) {
  RobotAccount a;
  a.account_id = id;
  a.cluster_id = cluster_id;
  a.user_group = group;
  a.quota.budget = from_core_hours(budget_h);
  a.quota.max_concurrent_jobs = max_jobs;
  a.valid_from = kEpoch - seconds(86400);
  a.valid_until = kEpoch + seconds(30 * 86400);
  return a;
}

ResourceRequest request(std::uint32_t cpus, std::uint64_t walltime_s, std::uint32_t gpus = 0) {
  return ResourceRequest{cpus, 1024, gpus, walltime_s};
}

IneligibleCause selection_cause(const ClusterRegistry& reg, const ResourceRequest& r, const std::string& group,
                                Timestamp now) {
  try {
    reg.select_cluster(r, group, now);
  } catch (const SelectionError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoEligibleCluster);
    return e.cause();
  }
  ADD_FAILURE() << "selection unexpectedly succeeded";
  return IneligibleCause::ClusterDown;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(SelectCluster, SingleEligibleCandidate) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab"));
  Selection s = reg.select_cluster(request(2, 3600), "lab", kEpoch);
  EXPECT_EQ(s.cluster.cluster_id, "c1");
  EXPECT_EQ(s.account.account_id, "r1");
}

TEST(SelectCluster, GpuRequestSkipsClustersWithoutGpus) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("a"));
  reg.add_cluster(cluster("b", 4));
  reg.add_account(account("ra", "a", "lab"));
  reg.add_account(account("rb", "b", "lab"));
  EXPECT_EQ(reg.select_cluster(request(2, 3600, 2), "lab", kEpoch).cluster.cluster_id, "b");
  EXPECT_EQ(selection_cause(reg, request(2, 3600, 8), "lab", kEpoch), IneligibleCause::CapabilityMismatch);
}

TEST(SelectCluster, TieGoesToSmallerIdThenLeastLoaded) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("beta"));
  reg.add_cluster(cluster("alpha"));
  reg.add_account(account("rb", "beta", "lab"));
  reg.add_account(account("ra", "alpha", "lab"));
  EXPECT_EQ(reg.select_cluster(request(1, 60), "lab", kEpoch).cluster.cluster_id, "alpha");
  reg.reserve("ra", request(1, 60), kEpoch, "x1");
  EXPECT_EQ(reg.select_cluster(request(1, 60), "lab", kEpoch).cluster.cluster_id, "beta");
  reg.reserve("rb", request(1, 60), kEpoch, "x2");
  EXPECT_EQ(reg.select_cluster(request(1, 60), "lab", kEpoch).cluster.cluster_id, "alpha");
}

TEST(SelectCluster, ReportsFurthestSubCause) {
  ClusterRegistry reg;
  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch), IneligibleCause::ClusterDown);

  reg.add_cluster(cluster("c1"));
  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch), IneligibleCause::NoAccount);

  reg.add_account(account("r1", "c1", "lab", 1, 1));
  EXPECT_EQ(selection_cause(reg, request(2, 3600), "lab", kEpoch), IneligibleCause::QuotaExhausted);

  reg.reserve("r1", request(1, 60), kEpoch, "x");
  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch), IneligibleCause::ConcurrencyLimit);

  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch + seconds(60 * 86400)),
            IneligibleCause::AccountExpired);
}

TEST(SelectCluster, DownAndExpiredAreNeverChosen) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("down"));
  reg.add_cluster(cluster("old"));
  reg.add_cluster(cluster("ok"));
  reg.add_account(account("r1", "down", "lab"));
  RobotAccount old = account("r2", "old", "lab");
  old.valid_until = kEpoch;
  reg.add_account(old);
  reg.add_account(account("r3", "ok", "lab"));
  reg.set_availability("down", Availability::Down);
  for (int i = 0; i < 8; ++i) {
    Selection s = reg.select_cluster(request(1, 60), "lab", kEpoch);
    EXPECT_EQ(s.cluster.cluster_id, "ok");
    reg.reserve(s.account.account_id, request(1, 60), kEpoch, "x" + std::to_string(i));
  }
  // ok is now at its concurrency limit; the others stay ineligible.
  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch), IneligibleCause::ConcurrencyLimit);
}

TEST(SelectCluster, ExpiredSoleClusterFails) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  RobotAccount a = account("r1", "c1", "lab");
  a.valid_until = kEpoch - seconds(1);
  reg.add_account(a);
  EXPECT_EQ(selection_cause(reg, request(1, 60), "lab", kEpoch), IneligibleCause::AccountExpired);
}

TEST(CheckValidity, HalfOpenWindow) {
  RobotAccount a = account("r1", "c1", "lab");
  EXPECT_TRUE(check_validity(a, a.valid_from));
  EXPECT_FALSE(check_validity(a, a.valid_from - 1));
  EXPECT_TRUE(check_validity(a, a.valid_until - 1));
  EXPECT_FALSE(check_validity(a, a.valid_until));
}

TEST(Reserve, HoldsCpusTimesWalltime) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab", 100));
  Reservation r = reg.reserve("r1", request(4, 7200), kEpoch, "j1");
  EXPECT_EQ(r.amount, 4 * 7200);
  QuotaState q = reg.account("r1").quota;
  EXPECT_DOUBLE_EQ(to_core_hours(q.reserved), 8.0);
  EXPECT_DOUBLE_EQ(to_core_hours(q.headroom()), 92.0);
  EXPECT_EQ(q.active_jobs, 1u);
  EXPECT_TRUE(reg.is_outstanding("j1"));
}

TEST(Reserve, RejectsOverBudget) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab", 5));
  EXPECT_EQ(code_of([&] { reg.reserve("r1", request(4, 7200), kEpoch, "j1"); }), ErrorCode::QuotaExceeded);
  QuotaState q = reg.account("r1").quota;
  EXPECT_EQ(q.reserved, 0);
  EXPECT_EQ(q.active_jobs, 0u);
}

TEST(Reserve, RejectsAtConcurrencyLimitAndOutsideValidity) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab", 100, 1));
  reg.reserve("r1", request(1, 60), kEpoch, "j1");
  EXPECT_EQ(code_of([&] { reg.reserve("r1", request(1, 60), kEpoch, "j2"); }), ErrorCode::ConcurrencyLimit);
  reg.settle("j1", 60);
  EXPECT_EQ(code_of([&] { reg.reserve("r1", request(1, 60), kEpoch + seconds(31 * 86400), "j3"); }),
            ErrorCode::AccountExpired);
}

TEST(Settle, ChargesActualRuntimeOnce) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab", 100));
  reg.reserve("r1", request(4, 7200), kEpoch, "j1");
  Settlement s = reg.settle("j1", 3600);
  EXPECT_EQ(s.released, 4 * 7200);
  EXPECT_EQ(s.charged, 4 * 3600);
  QuotaState q = reg.account("r1").quota;
  EXPECT_DOUBLE_EQ(to_core_hours(q.spent), 4.0);
  EXPECT_EQ(q.reserved, 0);
  EXPECT_EQ(q.active_jobs, 0u);
  EXPECT_EQ(code_of([&] { reg.settle("j1", 3600); }), ErrorCode::UnknownReservation);
  EXPECT_DOUBLE_EQ(to_core_hours(reg.account("r1").quota.spent), 4.0);
}

TEST(Settle, CapsChargeAtWalltime) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_account(account("r1", "c1", "lab", 100));
  reg.reserve("r1", request(2, 100), kEpoch, "j1");
  EXPECT_EQ(reg.settle("j1", 10'000).charged, 200);
}

// Random reserve/settle sequences checked against a plain-arithmetic model.
TEST(QuotaLedger, MatchesReplayOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    ClusterRegistry reg;
    reg.add_cluster(cluster("c1"));
    const std::int64_t budget_h = 1 + static_cast<std::int64_t>(rng() % 20);
    const std::uint32_t max_jobs = 1 + static_cast<std::uint32_t>(rng() % 4);
    reg.add_account(account("r1", "c1", "lab", static_cast<double>(budget_h), max_jobs));

    std::int64_t budget = budget_h * 3600, reserved = 0, spent = 0;
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> open;  // id -> (cpus, walltime)
    for (int step = 0; step < 40; ++step) {
      if (open.empty() || rng() % 2 == 0) {
        const std::int64_t cpus = 1 + static_cast<std::int64_t>(rng() % 8);
        const std::int64_t wall = 60 + static_cast<std::int64_t>(rng() % 7200);
        const std::string id = "t" + std::to_string(step);
        const bool fits = open.size() < max_jobs && budget - reserved - spent >= cpus * wall;
        bool ok = true;
        try {
          reg.reserve("r1", request(static_cast<std::uint32_t>(cpus), static_cast<std::uint64_t>(wall)), kEpoch, id);
        } catch (const Error&) {
          ok = false;
        }
        ASSERT_EQ(ok, fits) << "trial " << trial << " step " << step;
        if (ok) {
          reserved += cpus * wall;
          open[id] = {cpus, wall};
        }
      } else {
        auto it = std::next(open.begin(), static_cast<long>(rng() % open.size()));
        const std::int64_t actual = static_cast<std::int64_t>(rng() % 9000);
        reg.settle(it->first, static_cast<std::uint64_t>(actual));
        reserved -= it->second.first * it->second.second;
        spent += it->second.first * std::min(actual, it->second.second);
        open.erase(it);
      }
      QuotaState q = reg.account("r1").quota;
      ASSERT_EQ(q.reserved, reserved);
      ASSERT_EQ(q.spent, spent);
      ASSERT_EQ(q.active_jobs, open.size());
      ASSERT_LE(q.reserved + q.spent, q.budget + 0) << "budget overrun";
    }
  }
}

TEST(QuotaLedger, ConcurrentReservesForLastSlotAdmitOne) {
  for (int round = 0; round < 20; ++round) {
    ClusterRegistry reg;
    reg.add_cluster(cluster("c1"));
    reg.add_account(account("r1", "c1", "lab", 1, 8));  // room for exactly one 1-cpu hour
    std::atomic<int> won{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        try {
          reg.reserve("r1", request(1, 3600), kEpoch, "x" + std::to_string(t));
          ++won;
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::QuotaExceeded);
        }
      });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(won.load(), 1);
    EXPECT_EQ(reg.account("r1").quota.reserved, 3600);
  }
}

TEST(QuotaReport, AlignedColumns) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  reg.add_cluster(cluster("c2"));
  reg.add_account(account("r2", "c2", "zeta", 5));
  reg.add_account(account("r1", "c1", "lab", 100));
  reg.reserve("r1", request(4, 7200), kEpoch, "j1");
  EXPECT_EQ(reg.quota_report(),
            "GROUP  CLUSTER  BUDGET  RESERVED  SPENT  ACTIVE\n"
            "lab    c1       100.00      8.00   0.00       1\n"
            "zeta   c2         5.00      0.00   0.00       0\n");
}

TEST(RegistryJson, RoundTripKeepsDefinitionsOnly) {
  ClusterRegistry reg;
  ClusterProfile c = cluster("c1", 2);
  c.auth_mode = AuthMode::Ticket;
  reg.add_cluster(c);
  reg.add_account(account("r1", "c1", "lab", 12.5, 3));
  reg.reserve("r1", request(1, 60), kEpoch, "j1");

  ClusterRegistry copy;
  ClusterRegistry::load_into(copy, reg.to_json());
  EXPECT_EQ(copy.cluster("c1"), c);
  RobotAccount a = copy.account("r1");
  EXPECT_EQ(a.quota.budget, 45000);
  EXPECT_EQ(a.quota.max_concurrent_jobs, 3u);
  EXPECT_EQ(a.quota.reserved, 0);
  EXPECT_EQ(a.valid_until, kEpoch + seconds(30 * 86400));
  EXPECT_EQ(copy.to_json(), reg.to_json());
}

TEST(Registry, RejectsDuplicatesAndUnknowns) {
  ClusterRegistry reg;
  reg.add_cluster(cluster("c1"));
  EXPECT_EQ(code_of([&] { reg.add_cluster(cluster("c1")); }), ErrorCode::DuplicateCluster);
  EXPECT_EQ(code_of([&] { reg.add_account(account("r1", "nope", "lab")); }), ErrorCode::UnknownCluster);
  reg.add_account(account("r1", "c1", "lab"));
  EXPECT_EQ(code_of([&] { reg.add_account(account("r1", "c1", "other")); }), ErrorCode::DuplicateAccount);
  EXPECT_EQ(code_of([&] { reg.add_account(account("r9", "c1", "lab")); }), ErrorCode::DuplicateAccount);
  EXPECT_EQ(code_of([&] { reg.account("r7"); }), ErrorCode::UnknownAccount);
}
