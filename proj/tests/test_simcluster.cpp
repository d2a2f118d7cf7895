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

#include <bitset>
#include <queue>
#include <random>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/simcluster.hpp"
#include "support.hpp"

using namespace crossbound;
using crossbound::testing::fixed_runtime;
using crossbound::testing::kEpoch;
using crossbound::testing::TempDir;

namespace {

const std::string kImage = "/scratch/.bundles/img/data";

struct Site {
  TempDir tmp;
  RemoteFs fs{tmp.path()};
  VirtualClock clock{kEpoch};
  SimCluster sim;

  explicit Site(unsigned slots = 1, RuntimeModel runtime = fixed_runtime(600), std::vector<FailureRule> failures = {})
      : sim(SimClusterConfig{"c1", slots, std::move(runtime), std::move(failures)}, fs, clock) {
    fs.write_atomic(kImage, "image");
  }

  // Lays out a work dir the way staging would and returns the script text.
  std::string prepare(const std::string& id, const std::string& tool = "align",
                      std::vector<Parameter> params = {{"mode", "fast"}}, std::uint64_t walltime_s = 3600,
                      const std::string& reads = "ACGT\n") {
    const std::string wd = "/scratch/" + id;
    fs.write_atomic(wd + "/reads", reads);
    Json p = Json::array();
    for (const auto& q : params) p.push_back({{"name", q.name}, {"value", q.value}});
    Json ctx = {{"job_id", id},          {"tool_id", tool},   {"tool_version", "1.0"},
                {"parameters", p},       {"inputs", {{"reads", wd + "/reads"}}},
                {"outputs", {"out.txt"}}};
    fs.write_atomic(wd + "/job.json", ctx.dump());
    return "#!/bin/bash\n#SBATCH --job-name=" + id + "\n#SBATCH --cpus-per-task=1\n#SBATCH --mem=100M\n" +
           "#SBATCH --time=" + format_walltime(walltime_s) + "\n#SBATCH --output=" + wd + "/job.out\n" +
           "#SBATCH --error=" + wd + "/job.err\n\ncd " + wd + "\nsingularity exec " + kImage + " " + tool +
           " -o out.txt\n";
  }

  std::string submit(const std::string& id, const std::string& tool = "align",
                     std::vector<Parameter> params = {{"mode", "fast"}}, std::uint64_t walltime_s = 3600) {
    return sim.sbatch(prepare(id, tool, std::move(params), walltime_s));
  }

  std::string verb(const std::string& line) {
    auto r = sim.handle(split_command(line));
    return r ? r->out : "<none>";
  }
};

JobContext context(const std::string& records) {
  JobContext c;
  c.tool_id = "shmatch";
  c.parameters = {{"records", records}};
  return c;
}

}  // namespace

TEST(SimCluster, SlotsRunFifo) {
  Site s(1);
  const std::string a = s.submit("ja");
  const std::string b = s.submit("jb");
  EXPECT_EQ(a, "1000");
  EXPECT_EQ(s.sim.squeue(a).state, SimState::Running);
  EXPECT_EQ(s.sim.squeue(b).state, SimState::Pending);
  EXPECT_EQ(s.sim.running_count(), 1u);

  auto events = s.sim.advance_clock(600);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0], (SimEvent{kEpoch + seconds(600), a, SimState::Completed}));
  EXPECT_EQ(events[1], (SimEvent{kEpoch + seconds(600), b, SimState::Running}));
  EXPECT_EQ(s.sim.squeue(b).started, kEpoch + seconds(600));
}

TEST(SimCluster, QueryVerbFormats) {
  Site s(1);
  const std::string a = s.submit("ja");
  EXPECT_EQ(s.verb("squeue " + a), a + " RUNNING\n");
  EXPECT_EQ(s.verb("sacct " + a), a + " RUNNING " + std::to_string(kEpoch) + " -\n");
  s.sim.advance_clock(600);
  EXPECT_EQ(s.verb("squeue " + a), a + " COMPLETED 0\n");
  EXPECT_EQ(s.verb("sacct " + a), a + " COMPLETED " + std::to_string(kEpoch) + " " +
                                      std::to_string(kEpoch + seconds(600)) + "\n");
  EXPECT_EQ(s.verb("frobnicate"), "<none>");
}

TEST(SimCluster, SbatchVerbReadsScriptFromSandbox) {
  Site s;
  s.fs.write_atomic("/scratch/ja/job.sh", s.prepare("ja"));
  EXPECT_EQ(s.verb("sbatch /scratch/ja/job.sh"), "Submitted batch job 1000\n");
  auto r = s.sim.handle({"sbatch", "/scratch/none.sh"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->exit_code, 1);
}

TEST(SimCluster, MalformedScriptIsRejected) {
  Site s;
  std::string script = s.prepare("ja");
  script.replace(script.find("--time=01:00:00"), 15, "--time=1:0:0");
  EXPECT_THROW(s.sim.sbatch(script), Error);
  EXPECT_TRUE(s.sim.jobs().empty());
}

TEST(SimCluster, CompletedJobWritesOutputs) {
  Site s;
  const std::string a = s.submit("ja");
  s.sim.advance_clock(600);
  EXPECT_EQ(*s.fs.read("/scratch/ja/out.txt"),
            simulated_output("align", "1.0", {{"reads", sha256_hex("ACGT\n")}}, {{"mode", "fast"}}, "out.txt"));
  EXPECT_EQ(*s.fs.read("/scratch/ja/job.out"), "exit 0\n");
}

TEST(SimCluster, FailureRulesForceExitCodes) {
  FailureRule by_param{FailureRule::Field::Param, "mode", "broken", 3};
  FailureRule by_tool{FailureRule::Field::ToolId, "", "crash", 9};
  Site s(4, fixed_runtime(60), {by_param, by_tool});
  const std::string a = s.submit("ja", "align", {{"mode", "broken"}});
  const std::string b = s.submit("jb", "crash");
  const std::string c = s.submit("jc");
  s.sim.advance_clock(60);
  EXPECT_EQ(s.verb("squeue " + a), a + " FAILED 3\n");
  EXPECT_EQ(s.verb("squeue " + b), b + " FAILED 9\n");
  EXPECT_EQ(s.verb("squeue " + c), c + " COMPLETED 0\n");
  EXPECT_FALSE(s.fs.exists("/scratch/ja/out.txt"));
}

TEST(SimCluster, RuntimeBeyondWalltimeTimesOut) {
  Site s(1, fixed_runtime(7200));
  const std::string a = s.submit("ja", "align", {{"mode", "fast"}}, 3600);
  s.sim.advance_clock(3599);
  EXPECT_EQ(s.sim.squeue(a).state, SimState::Running);
  s.sim.advance_clock(1);
  SimJob j = s.sim.squeue(a);
  EXPECT_EQ(j.state, SimState::Failed);
  EXPECT_EQ(j.exit_code, 124);
  EXPECT_EQ(j.finished, kEpoch + seconds(3600));
}

TEST(SimCluster, MissingInputOrImageFails) {
  Site s(1, fixed_runtime(10));
  const std::string a = s.submit("ja");
  s.fs.remove_all("/scratch/ja/reads");
  s.sim.advance_clock(10);
  EXPECT_EQ(s.sim.squeue(a).exit_code, 2);

  const std::string b = s.submit("jb");
  s.fs.remove_all(kImage);
  s.sim.advance_clock(10);
  EXPECT_EQ(s.sim.squeue(b).exit_code, 127);
}

TEST(SimCluster, CancelFreesTheSlot) {
  Site s(1);
  const std::string a = s.submit("ja");
  const std::string b = s.submit("jb");
  s.sim.advance_clock(100);
  s.sim.scancel(a);
  EXPECT_EQ(s.sim.squeue(a).state, SimState::Cancelled);
  EXPECT_EQ(s.sim.squeue(b).started, kEpoch + seconds(100));
  EXPECT_TRUE(s.sim.active_jobs().size() == 1);
  s.sim.scancel(a);  // idempotent
}

TEST(SimCluster, ZeroAdvanceProducesNoEvents) {
  Site s;
  s.submit("ja");
  EXPECT_TRUE(s.sim.advance_clock(0).empty());
}

TEST(SimCluster, SimultaneousFinishesKeepSubmissionOrder) {
  Site s(2, fixed_runtime(300));
  const std::string a = s.submit("ja");
  const std::string b = s.submit("jb");
  auto events = s.sim.advance_clock(1000);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].remote_job_id, a);
  EXPECT_EQ(events[1].remote_job_id, b);
}

TEST(SimulatedOutput, PinnedValue) {
  const DigestList inputs = {{"reads", "4ee2e5276c051cd23324652d3a637d378461312726965f8e333b13f931bf23a0"},
                             {"db", "1d60a3f3b7dc4680bf7fabe27d2b216b520a523e4697038bb2c26e9c4c3c2d8c"}};
  const std::string out = simulated_output("align", "1.0", inputs, {{"mode", "fast"}}, "aligned.txt");
  EXPECT_EQ(out, "align 1.0\naligned.txt f7023906e9acdd41b4f1114eda2b677cf432dadedb438fea15f9136782740b8c\n");
  EXPECT_EQ(sha256_hex(out), "33ce5369b8e46729e69ff9688a1e15e8649c7ecf496e2956d91db3cee7904b2f");
}

TEST(SimulatedOutput, SmallInputChangesScrambleTheValue) {
  auto value = [](const std::string& digest, const std::string& mode) {
    std::string out = simulated_output("t", "1", {{"x", digest}}, {{"mode", mode}}, "o");
    return out.substr(out.size() - 65, 64);
  };
  auto bits = [](const std::string& hex) {
    std::bitset<256> b;
    for (std::size_t i = 0; i < 64; ++i) {
      unsigned v = std::stoul(hex.substr(i, 1), nullptr, 16);
      for (int k = 0; k < 4; ++k) b[i * 4 + k] = (v >> k) & 1u;
    }
    return b;
  };
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    std::string d = sha256_hex(std::to_string(rng()));
    std::string flipped = d;
    flipped[rng() % 64] ^= 1;
    auto diff = (bits(value(d, "fast")) ^ bits(value(flipped, "fast"))).count();
    EXPECT_GT(diff, 64u);
    EXPECT_LT(diff, 192u);
    EXPECT_EQ(value(d, "fast"), value(d, "fast"));
    EXPECT_NE(value(d, "fast"), value(d, "fasT"));
  }
}

TEST(SimCluster, OutputsDoNotDependOnScheduling) {
  Site busy(1, fixed_runtime(100));
  Site idle(8, fixed_runtime(100));
  for (int i = 0; i < 5; ++i) {
    busy.submit("j" + std::to_string(i), "align", {{"mode", std::to_string(i)}});
    idle.submit("j" + std::to_string(i), "align", {{"mode", std::to_string(i)}});
  }
  busy.sim.advance_clock(1000);
  idle.sim.advance_clock(1000);
  for (int i = 0; i < 5; ++i) {
    const std::string p = "/scratch/j" + std::to_string(i) + "/out.txt";
    EXPECT_EQ(*busy.fs.read(p), *idle.fs.read(p));
  }
  EXPECT_NE(busy.sim.jobs()[4].finished, idle.sim.jobs()[4].finished);
}

TEST(RuntimeModel, TableInterpolatesAndClamps) {
  RuntimeModel m;
  m.kind = RuntimeModel::Kind::Table;
  m.table = {{10, 12}, {100, 118}, {1000, 148}};
  m.validate();
  EXPECT_EQ(m.runtime_for(context("10")), seconds(720));
  EXPECT_EQ(m.runtime_for(context("100")), seconds(118 * 60));
  EXPECT_EQ(m.runtime_for(context("55")), seconds(65 * 60));  // 12 + 45/90 * 106 min
  EXPECT_EQ(m.runtime_for(context("1")), seconds(720));
  EXPECT_EQ(m.runtime_for(context("5000")), seconds(148 * 60));
  EXPECT_THROW(m.runtime_for(context("many")), Error);
  EXPECT_THROW(m.runtime_for(JobContext{}), Error);

  RuntimeModel bad = m;
  bad.table = {{10, 1}, {10, 2}};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(RuntimeModel, PerToolOverride) {
  RuntimeModel m = fixed_runtime(60);
  m.per_tool_s["shmatch"] = 90.5;
  EXPECT_EQ(m.runtime_for(context("1")), 90'500'000);
  JobContext other;
  other.tool_id = "x";
  EXPECT_EQ(m.runtime_for(other), seconds(60));
}

// Interleaved submits and clock advances against a FIFO multi-slot model.
TEST(SimCluster, MatchesFifoScheduleOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const unsigned slots = 1 + static_cast<unsigned>(rng() % 4);
    RuntimeModel m = fixed_runtime(1);
    for (int t = 0; t < 5; ++t) m.per_tool_s["t" + std::to_string(t)] = static_cast<double>(1 + rng() % 500);
    Site s(slots, m);

    struct Sub {
      Timestamp at;
      Timestamp runtime;
    };
    std::vector<Sub> subs;
    for (int i = 0; i < 25; ++i) {
      s.sim.advance_clock(static_cast<std::int64_t>(rng() % 200));
      const std::string tool = "t" + std::to_string(rng() % 5);
      subs.push_back({s.clock.now(), seconds(static_cast<std::int64_t>(m.per_tool_s[tool]))});
      s.submit("j" + std::to_string(i), tool);
    }
    s.sim.advance_clock(100'000);

    std::priority_queue<Timestamp, std::vector<Timestamp>, std::greater<>> free_at;
    for (unsigned k = 0; k < slots; ++k) free_at.push(0);
    Timestamp prev_start = 0;
    auto jobs = s.sim.jobs();
    for (std::size_t i = 0; i < subs.size(); ++i) {
      Timestamp start = std::max({subs[i].at, free_at.top(), prev_start});
      free_at.pop();
      free_at.push(start + subs[i].runtime);
      prev_start = start;
      ASSERT_EQ(jobs[i].started, start) << "trial " << trial << " job " << i;
      ASSERT_EQ(jobs[i].finished, start + subs[i].runtime);
      ASSERT_EQ(jobs[i].state, SimState::Completed);
    }
  }
}

TEST(SimCluster, StateSurvivesJsonRoundTrip) {
  Site s(1);
  s.submit("ja");
  s.submit("jb");
  s.sim.advance_clock(300);
  SimCluster copy(s.sim.config(), s.fs, s.clock);
  copy.load_state(s.sim.state_to_json());
  EXPECT_EQ(copy.state_to_json(), s.sim.state_to_json());
  copy.advance_clock(600);
  EXPECT_EQ(copy.squeue("1000").state, SimState::Completed);
  EXPECT_EQ(copy.squeue("1001").state, SimState::Running);
  EXPECT_EQ(copy.sbatch(s.prepare("jc")), "1002");

  SimClusterConfig back = sim_config_from_json(to_json(s.sim.config()));
  EXPECT_EQ(to_json(back), to_json(s.sim.config()));
}

TEST(SimCluster, FetchObjectReadsFileUrls) {
  Site s;
  TempDir store;
  std::ofstream(store.path() / "obj.bin", std::ios::binary) << "object\n";
  const std::string url = "file://" + store.path().string();
  auto ok = s.sim.handle({"fetch-object", url, "obj.bin", "/scratch/x/obj"});
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->exit_code, 0);
  EXPECT_EQ(*s.fs.read("/scratch/x/obj"), "object\n");
  EXPECT_EQ(s.sim.handle({"fetch-object", "file:///does/not/exist", "obj.bin", "/scratch/x/o"})->exit_code, 2);
  EXPECT_EQ(s.sim.handle({"fetch-object", "s3://bucket", "obj.bin", "/scratch/x/o"})->exit_code, 2);
  EXPECT_EQ(s.sim.handle({"fetch-object", url, "missing", "/scratch/x/o"})->exit_code, 1);
  EXPECT_EQ(s.sim.handle({"fetch-object", url, "../escape", "/scratch/x/o"})->exit_code, 1);
}
