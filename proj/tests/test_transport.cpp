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

#include <random>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/transport.hpp"
#include "support.hpp"

using namespace crossbound;
using crossbound::testing::kEpoch;
using crossbound::testing::slurp;
using crossbound::testing::TempDir;

namespace {

ClusterProfile profile(const std::string& id, AuthMode mode = AuthMode::Key) {
  ClusterProfile p;
  p.cluster_id = id;
  p.endpoint = "sim://" + id;
  p.auth_mode = mode;
  p.scratch_root = "/scratch";
  p.capabilities = {8, 8192, 0, 3600};
  return p;
}

struct Fixture {
  TempDir tmp;
  LocalBackend backend{tmp.path()};
  TransferLog log;
  VirtualClock clock{kEpoch};

  std::unique_ptr<TransportSession> open(const ClusterProfile& p, Credential c = {AuthMode::Key, "robot", {}}) {
    return connect(p, c, backend, log, clock);
  }
};

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

TEST(Connect, KeyCredentialAgainstTicketClusterIsRejected) {
  Fixture f;
  EXPECT_EQ(code_of([&] { f.open(profile("c1", AuthMode::Ticket)); }), ErrorCode::AuthModeMismatch);
  EXPECT_EQ(f.log.size(), 0u);
}

TEST(Connect, DownClusterIsUnreachable) {
  Fixture f;
  ClusterProfile p = profile("c1");
  p.availability = Availability::Down;
  EXPECT_EQ(code_of([&] { f.open(p); }), ErrorCode::Unreachable);
}

TEST(Connect, ExpiredTicketIsRejected) {
  Fixture f;
  Credential ticket{AuthMode::Ticket, "krb", kEpoch + seconds(10)};
  auto s = f.open(profile("c1", AuthMode::Ticket), ticket);
  EXPECT_EQ(s->auth_mode_used(), AuthMode::Ticket);
  f.clock.advance_by(seconds(10));
  EXPECT_EQ(code_of([&] { f.open(profile("c1", AuthMode::Ticket), ticket); }), ErrorCode::CredentialExpired);
}

TEST(Session, PutThenGetRoundTrips) {
  Fixture f;
  auto s = f.open(profile("c1"));
  const std::string bytes = "payload\n\x00\x01 binary";
  EXPECT_EQ(s->put_file(bytes, "/scratch/j1/in"), sha256_hex(bytes));
  FetchedFile got = s->get_file("/scratch/j1/in");
  EXPECT_EQ(got.bytes, bytes);
  EXPECT_EQ(got.digest, sha256_hex(bytes));
  EXPECT_EQ(slurp(f.tmp.path() / "c1" / "scratch/j1/in"), bytes);
}

TEST(Session, EmptyFileDigest) {
  Fixture f;
  auto s = f.open(profile("c1"));
  EXPECT_EQ(s->put_file("", "/scratch/empty"),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(s->get_file("/scratch/empty").bytes, "");
}

TEST(Session, ClosedSessionRefusesWork) {
  Fixture f;
  auto s = f.open(profile("c1"));
  s->close();
  EXPECT_EQ(s->state(), SessionState::Closed);
  EXPECT_EQ(code_of([&] { s->put_file("x", "/a"); }), ErrorCode::SessionClosed);
  EXPECT_EQ(code_of([&] { s->get_file("/a"); }), ErrorCode::SessionClosed);
  EXPECT_EQ(code_of([&] { s->exec_command("true"); }), ErrorCode::SessionClosed);
}

TEST(Session, MissingFileIsNotFound) {
  Fixture f;
  auto s = f.open(profile("c1"));
  EXPECT_EQ(code_of([&] { s->get_file("/scratch/none"); }), ErrorCode::NotFound);
}

TEST(Session, RelativeOrEscapingPathsAreRejected) {
  Fixture f;
  auto s = f.open(profile("c1"));
  EXPECT_EQ(code_of([&] { s->put_file("x", "scratch/a"); }), ErrorCode::RemoteIOError);
  EXPECT_EQ(code_of([&] { s->put_file("x", "/scratch/../../etc/a"); }), ErrorCode::RemoteIOError);
}

TEST(Session, BuiltinVerbs) {
  Fixture f;
  auto s = f.open(profile("c1"));
  EXPECT_EQ(s->exec_command("true").exit_code, 0);
  EXPECT_EQ(s->exec_command("false").exit_code, 1);
  EXPECT_EQ(s->exec_command("echo a  b").out, "a b\n");
  CommandResult missing = s->exec_command("frobnicate --now");
  EXPECT_EQ(missing.exit_code, 127);

  s->put_file("abc", "/scratch/d/f");
  EXPECT_EQ(s->exec_command("sha256 /scratch/d/f").out,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  /scratch/d/f\n");
  EXPECT_EQ(s->exec_command("test -e /scratch/d/f").exit_code, 0);
  EXPECT_EQ(s->exec_command("rm -r /scratch/d").exit_code, 0);
  EXPECT_EQ(s->exec_command("test -e /scratch/d/f").exit_code, 1);
  EXPECT_EQ(s->exec_command("mkdir -p /scratch/x/y").exit_code, 0);
  EXPECT_EQ(s->exec_command("test -e /scratch/x/y").exit_code, 0);
}

TEST(TransferLog, CountsByDirectionAndDigest) {
  Fixture f;
  auto s = f.open(profile("c1"));
  const std::string d = s->put_file("abc", "/a");
  s->put_file("abc", "/b");
  s->get_file("/a");
  s->exec_command("true");
  EXPECT_EQ(f.log.size(), 3u);
  EXPECT_EQ(f.log.count("c1", d, Direction::Put), 2u);
  EXPECT_EQ(f.log.count("c1", d, Direction::Get), 1u);
  EXPECT_EQ(f.log.count("c2", d, Direction::Put), 0u);
  EXPECT_EQ(f.log.total_bytes(), 9u);
}

TEST(TransferLog, MirrorsToFile) {
  TempDir tmp;
  auto log = TransferLog::open(tmp.path() / "transfers.jsonl");
  log->append(TransferRecord{kEpoch, Direction::Put, "c1", "/a", 3, std::string(64, 'b')});
  auto reopened = TransferLog::open(tmp.path() / "transfers.jsonl");
  ASSERT_EQ(reopened->size(), 1u);
  EXPECT_EQ(reopened->entries()[0].remote_path, "/a");
}

TEST(LinkModel, TransfersAdvanceVirtualClock) {
  Fixture f;
  f.backend.set_link("c1", LinkModel{50'000, 12.5e6}, &f.clock);
  auto s = f.open(profile("c1"));
  s->put_file(std::string(1'000'000, 'x'), "/big");
  // 50 ms latency + 1 MB at 12.5 MB/s = 130 ms
  EXPECT_EQ(f.clock.now() - kEpoch, 130'000);
  s->exec_command("true");
  EXPECT_EQ(f.clock.now() - kEpoch, 130'000);
}

TEST(Session, RandomPayloadsRoundTrip) {
  Fixture f;
  auto s = f.open(profile("c1"));
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    std::string bytes(rng() % 4096, '\0');
    for (auto& c : bytes) c = static_cast<char>(rng());
    const std::string path = "/scratch/r/" + std::to_string(i % 17);
    const std::string d = s->put_file(bytes, path);
    FetchedFile got = s->get_file(path);
    ASSERT_EQ(got.bytes, bytes);
    ASSERT_EQ(got.digest, d);
  }
}
