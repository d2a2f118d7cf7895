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

#include "crossbound/clock.hpp"
#include "crossbound/codec.hpp"
#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/tool_registry.hpp"
#include "crossbound/validate.hpp"

using namespace crossbound;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

ToolDescriptor seq_tool() {
  ToolDescriptor t;
  t.tool_id = "seqtool";
  t.version = "1.0";
  t.container_image = "example/seqtool:1.0";
  t.container_digest = std::string(64, 'a');
  t.command_template = "tool -i {input:seqs} -n {param:n} -o {output:out.txt}";
  t.declared_inputs = {{"seqs", DataKind::Inline}};
  t.declared_params = {{"n", std::nullopt}, {"mode", std::string("quick")}};
  t.declared_outputs = {"out.txt"};
  t.default_resources = {4, 8192, 0, 7200};
  return t;
}

JobSpec seq_spec() {
  JobSpec s;
  s.job_id = "j1";
  s.tool_id = "seqtool";
  s.tool_version = "1.0";
  DataRef in;
  in.name = "seqs";
  in.kind = DataKind::Inline;
  in.local_path = "/data/seqs.fa";
  in.size_bytes = 12;
  in.digest = std::string(64, 'b');
  s.inputs = {in};
  s.parameters = {{"n", "10"}};
  return s;
}

StagedLayout seq_layout() {
  StagedLayout l;
  l.job_id = "j1";
  l.work_dir = "/scratch/j1";
  l.staged = {{"seqs", "/scratch/j1/seqs.fa"}};
  l.container_path = "/scratch/.bundles/" + std::string(64, 'a') + "/data";
  return l;
}

}  // namespace

// ---- digests ----

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex("The quick brown fox jumps over the lazy dog"),
            "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST(Digest, IncrementalMatchesOneShot) {
  Sha256 h;
  std::string chunk(1000, 'a');
  for (int i = 0; i < 1000; ++i) h.update(chunk);
  EXPECT_EQ(h.hex_digest(), "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST(Digest, Normalization) {
  std::string hex(64, 'f');
  EXPECT_EQ(normalize_digest("sha256:" + hex), hex);
  EXPECT_EQ(normalize_digest(hex), hex);
  EXPECT_EQ(code_of([] { normalize_digest("sha256:" + std::string(64, 'F')); }), ErrorCode::BadDigest);
  EXPECT_EQ(code_of([] { normalize_digest(std::string(63, 'a')); }), ErrorCode::BadDigest);
  EXPECT_FALSE(is_valid_digest("md5:abc"));
}

// ---- clock ----

TEST(Clock, Iso8601RoundTrip) {
  EXPECT_EQ(format_iso8601(0), "1970-01-01T00:00:00Z");
  EXPECT_EQ(format_iso8601(seconds(1'767'225'600)), "2026-01-01T00:00:00Z");
  EXPECT_EQ(format_iso8601(seconds(1'767'225'600) + 1500), "2026-01-01T00:00:00.001500Z");
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    Timestamp t = static_cast<Timestamp>(rng() % (4'000'000'000ULL * kMicrosPerSecond));
    EXPECT_EQ(parse_iso8601(format_iso8601(t)), t);
  }
  EXPECT_EQ(code_of([] { parse_iso8601("2026-01-01 00:00:00"); }), ErrorCode::InvalidArgument);
}

TEST(Clock, VirtualClockNeverMovesBack) {
  VirtualClock c(100);
  EXPECT_EQ(c.advance_to(50), 100);
  EXPECT_EQ(c.advance_by(25), 125);
  EXPECT_EQ(c.now(), 125);
}

// ---- validate_jobspec / render_command ----

class Validation : public ::testing::Test {
 protected:
  void SetUp() override { registry.install(seq_tool()); }
  ToolRegistry registry;
};

TEST_F(Validation, WellFormedSpec) {
  ValidatedJob v = validate_jobspec(seq_spec(), registry);
  EXPECT_EQ(v.tool.tool_id, "seqtool");
  EXPECT_EQ(v.resources, (ResourceRequest{4, 8192, 0, 7200}));
  ASSERT_EQ(v.parameters.size(), 2u);
  EXPECT_EQ(v.parameters[1], (Parameter{"mode", "quick"}));
  EXPECT_EQ(v.outputs, std::vector<std::string>{"out.txt"});
}

TEST_F(Validation, MissingVersionResolvesToLatest) {
  ToolDescriptor t2 = seq_tool();
  t2.version = "1.10";
  registry.install(t2);
  JobSpec s = seq_spec();
  s.tool_version.clear();
  EXPECT_EQ(validate_jobspec(s, registry).spec.tool_version, "1.10");
}

TEST_F(Validation, ErrorRouting) {
  auto with = [&](auto mutate) {
    JobSpec s = seq_spec();
    mutate(s);
    return code_of([&] { validate_jobspec(s, registry); });
  };
  EXPECT_EQ(with([](JobSpec& s) { s.tool_version = "9.9.9"; }), ErrorCode::UnknownTool);
  EXPECT_EQ(with([](JobSpec& s) { s.tool_id = "nope"; }), ErrorCode::UnknownTool);
  EXPECT_EQ(with([](JobSpec& s) { s.inputs.clear(); }), ErrorCode::MissingInput);
  EXPECT_EQ(with([](JobSpec& s) { s.parameters.clear(); }), ErrorCode::UnboundPlaceholder);
  EXPECT_EQ(with([](JobSpec& s) { s.output_names = {"../etc/x"}; }), ErrorCode::BadPath);
  EXPECT_EQ(with([](JobSpec& s) { s.output_names = {"/etc/x"}; }), ErrorCode::BadPath);
  EXPECT_EQ(with([](JobSpec& s) { s.inputs.push_back(s.inputs[0]); }), ErrorCode::DuplicateInput);
  EXPECT_EQ(with([](JobSpec& s) { s.inputs[0].digest = "xyz"; }), ErrorCode::BadDigest);
  EXPECT_EQ(with([](JobSpec& s) { s.parameters[0].value = "1 0"; }), ErrorCode::BadParameter);
  EXPECT_EQ(with([](JobSpec& s) { s.parameters[0].value = "{x}"; }), ErrorCode::BadParameter);
  EXPECT_EQ(with([](JobSpec& s) { s.parameters.push_back({"ghost", "1"}); }), ErrorCode::BadParameter);
  EXPECT_EQ(with([](JobSpec& s) { s.inputs[0].name = "../seqs"; }), ErrorCode::BadPath);
  EXPECT_EQ(with([](JobSpec& s) { s.resources = ResourceRequest{0, 1, 0, 1}; }), ErrorCode::InvalidArgument);
}

TEST_F(Validation, RenderCommandSubstitutes) {
  ValidatedJob v = validate_jobspec(seq_spec(), registry);
  StagedLayout l = seq_layout();
  EXPECT_EQ(render_command(v, l), "tool -i /scratch/j1/seqs.fa -n 10 -o /scratch/j1/out.txt");
  EXPECT_EQ(render_command(v, l), render_command(v, l));
  l.staged.clear();
  EXPECT_EQ(code_of([&] { render_command(v, l); }), ErrorCode::UnboundPlaceholder);
}

TEST_F(Validation, TemplateWithoutPlaceholdersIsVerbatim) {
  ToolDescriptor t = seq_tool();
  t.tool_id = "plain";
  t.command_template = "hostname --fqdn";
  t.declared_inputs.clear();
  t.declared_params.clear();
  registry.install(t);
  JobSpec s;
  s.job_id = "j2";
  s.tool_id = "plain";
  StagedLayout l = seq_layout();
  l.job_id = "j2";
  EXPECT_EQ(render_command(validate_jobspec(s, registry), l), "hostname --fqdn");
}

// ---- placeholders & names ----

TEST(Placeholders, ParseAndReject) {
  auto ps = parse_placeholders("a {input:x} b {param:y}{output:z.txt}");
  ASSERT_EQ(ps.size(), 3u);
  EXPECT_EQ(ps[0].kind, Placeholder::Kind::Input);
  EXPECT_EQ(ps[2].name, "z.txt");
  EXPECT_EQ(code_of([] { parse_placeholders("{nope:x}"); }), ErrorCode::PlaceholderError);
  EXPECT_EQ(code_of([] { parse_placeholders("stray }"); }), ErrorCode::PlaceholderError);
  EXPECT_EQ(code_of([] { parse_placeholders("{input:x"); }), ErrorCode::PlaceholderError);
}

TEST(Names, SafeRelativePaths) {
  EXPECT_TRUE(is_safe_relative_path("a.txt"));
  EXPECT_TRUE(is_safe_relative_path("dir/a.txt"));
  EXPECT_FALSE(is_safe_relative_path("../a"));
  EXPECT_FALSE(is_safe_relative_path("a/../b"));
  EXPECT_FALSE(is_safe_relative_path("/a"));
  EXPECT_FALSE(is_safe_relative_path("a//b"));
  EXPECT_FALSE(is_safe_relative_path(""));
}

// ---- manifests ----

namespace {
ReproducibilityManifest sample_manifest() {
  ReproducibilityManifest m;
  m.job_id = "j1";
  m.cluster_id = "c1";
  m.tool_id = "seqtool";
  m.tool_version = "1.0";
  m.container_digest = std::string(64, 'a');
  m.input_digests = {{"seqs", std::string(64, 'b')}};
  m.script_digest = std::string(64, 'c');
  m.output_digests = {{"a.txt", std::string(64, 'd')}, {"b.txt", std::string(64, 'e')}};
  return m;
}
}  // namespace

TEST(Manifest, VerifyReflexive) {
  auto m = sample_manifest();
  auto r = verify_reproduction(m, m);
  EXPECT_TRUE(r.bit_identical);
  EXPECT_TRUE(r.same_setup);
  EXPECT_TRUE(r.differences.empty());
  EXPECT_EQ(render_report_text(r), "BIT_IDENTICAL\nSAME_SETUP\n");
}

TEST(Manifest, OneOutputDiffers) {
  auto a = sample_manifest();
  auto b = a;
  b.output_digests[1].second = std::string(64, '0');
  auto r = verify_reproduction(a, b);
  EXPECT_FALSE(r.bit_identical);
  EXPECT_TRUE(r.same_setup);
  EXPECT_EQ(r.differences, std::vector<std::string>{"output_digests[b.txt]"});
}

TEST(Manifest, VerifyIsSymmetric) {
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto a = sample_manifest();
    auto b = a;
    if (rng() % 2) b.job_id = "j2";
    if (rng() % 2) b.script_digest = std::string(64, '1');
    if (rng() % 2) b.input_digests[0].second = std::string(64, '2');
    if (rng() % 2) b.output_digests.pop_back();
    auto ab = verify_reproduction(a, b);
    auto ba = verify_reproduction(b, a);
    EXPECT_EQ(ab.bit_identical, ba.bit_identical);
    EXPECT_EQ(ab.same_setup, ba.same_setup);
    EXPECT_EQ(ab.differences, ba.differences);
  }
}

TEST(Manifest, DocumentRoundTrip) {
  auto m = sample_manifest();
  std::string text = dump_manifest(m);
  EXPECT_EQ(load_manifest(text), m);
  EXPECT_EQ(dump_manifest(load_manifest(text)), text);
}

TEST(Manifest, UnsortedListsRejected) {
  Json j = to_json(sample_manifest());
  std::swap(j["output_digests"][0], j["output_digests"][1]);
  EXPECT_EQ(code_of([&] { manifest_from_json(j); }), ErrorCode::InvalidArgument);
}

// ---- job spec documents ----

TEST(JobSpecDocument, RoundTripIsByteStable) {
  JobSpec s = seq_spec();
  DataRef obj;
  obj.name = "remote";
  obj.kind = DataKind::ObjectStore;
  obj.endpoint_id = "s3-east";
  obj.object_key = "runs/7/reads.fq";
  DataRef ref;
  ref.name = "db";
  ref.kind = DataKind::ReferenceBundle;
  ref.digest = std::string(64, 'c');
  s.inputs.push_back(obj);
  s.inputs.push_back(ref);
  s.resources = ResourceRequest{2, 2048, 1, 600};
  s.output_names = {"out.txt"};
  s.notify_to = "lab@example.org";
  std::string text = dump_jobspec(s);
  JobSpec back = load_jobspec(text);
  EXPECT_EQ(back, s);
  EXPECT_EQ(dump_jobspec(back), text);
}

TEST(JobSpecDocument, UnknownFieldRejected) {
  EXPECT_EQ(code_of([] { load_jobspec(R"({"tool_id": "x", "colour": "red"})"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { load_jobspec("{not json"); }), ErrorCode::InvalidArgument);
}

TEST(JobSpecDocument, BundleSourceMustMatchDigest) {
  std::string doc = R"({"tool_id": "x", "inputs": [{"name": "db", "kind": "REFERENCE_BUNDLE",
    "source": {"bundle_digest": ")" + std::string(64, 'a') + R"("}, "digest": ")" + std::string(64, 'b') + R"("}]})";
  EXPECT_EQ(code_of([&] { load_jobspec(doc); }), ErrorCode::BadDigest);
}
