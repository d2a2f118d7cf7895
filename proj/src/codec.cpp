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

#include "crossbound/codec.hpp"

#include <algorithm>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"

namespace crossbound {
namespace json_detail {

void expect_keys(const Json& j, std::string_view what, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, std::string(what) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorCode::InvalidArgument, std::string(what) + " has unknown field '" + key + "'");
    }
  }
}

const Json& require(const Json& j, std::string_view what, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(ErrorCode::InvalidArgument, std::string(what) + " is missing field '" + key + "'");
  return *it;
}

std::string get_string(const Json& j, std::string_view what, const char* key) {
  const Json& v = require(j, what, key);
  if (!v.is_string()) fail(ErrorCode::InvalidArgument, std::string(what) + "." + key + " must be a string");
  return v.get<std::string>();
}

std::string get_string_or(const Json& j, std::string_view what, const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  return get_string(j, what, key);
}

std::uint64_t get_uint(const Json& j, std::string_view what, const char* key) {
  const Json& v = require(j, what, key);
  if (!v.is_number_unsigned()) fail(ErrorCode::InvalidArgument, std::string(what) + "." + key + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::int64_t get_int(const Json& j, std::string_view what, const char* key) {
  const Json& v = require(j, what, key);
  if (!v.is_number_integer()) fail(ErrorCode::InvalidArgument, std::string(what) + "." + key + " must be an integer");
  return v.get<std::int64_t>();
}

}  // namespace json_detail

using namespace json_detail;

namespace {

std::string digest_field(const Json& j, std::string_view what, const char* key, bool allow_empty) {
  std::string text = get_string_or(j, what, key, "");
  if (text.empty() && allow_empty) return text;
  try {
    return normalize_digest(text);
  } catch (const Error&) {
    fail(ErrorCode::BadDigest, std::string(what) + "." + key + " is not a sha256 digest");
  }
}

Json digest_list_to_json(const DigestList& list) {
  Json arr = Json::array();
  for (const auto& [name, digest] : list) arr.push_back(Json{{"name", name}, {"digest", digest}});
  return arr;
}

DigestList digest_list_from_json(const Json& j, std::string_view what) {
  if (!j.is_array()) fail(ErrorCode::InvalidArgument, std::string(what) + " must be an array");
  DigestList out;
  for (const auto& item : j) {
    expect_keys(item, what, {"name", "digest"});
    out.emplace_back(get_string(item, what, "name"), digest_field(item, what, "digest", false));
  }
  if (!std::is_sorted(out.begin(), out.end())) fail(ErrorCode::InvalidArgument, std::string(what) + " must be sorted by name");
  return out;
}

std::uint32_t to_u32(std::uint64_t v, const char* field) {
  if (v > 0xffffffffu) fail(ErrorCode::InvalidArgument, std::string(field) + " out of range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

Json to_json(const ResourceRequest& r) {
  return Json{{"cpus", r.cpus}, {"mem_mb", r.mem_mb}, {"gpus", r.gpus}, {"walltime_s", r.walltime_s}};
}

ResourceRequest resources_from_json(const Json& j) {
  expect_keys(j, "resources", {"cpus", "mem_mb", "gpus", "walltime_s"});
  ResourceRequest r;
  r.cpus = to_u32(get_uint(j, "resources", "cpus"), "cpus");
  r.mem_mb = get_uint(j, "resources", "mem_mb");
  r.gpus = j.contains("gpus") ? to_u32(get_uint(j, "resources", "gpus"), "gpus") : 0;
  r.walltime_s = get_uint(j, "resources", "walltime_s");
  r.validate();
  return r;
}

Json to_json(const JobSpec& spec) {
  Json inputs = Json::array();
  for (const auto& in : spec.inputs) {
    Json source;
    switch (in.kind) {
      case DataKind::Inline: source = Json{{"path", in.local_path}, {"size_bytes", in.size_bytes}}; break;
      case DataKind::ObjectStore: source = Json{{"endpoint", in.endpoint_id}, {"key", in.object_key}}; break;
      case DataKind::ReferenceBundle: source = Json{{"bundle_digest", in.digest}}; break;
    }
    inputs.push_back(Json{{"name", in.name}, {"kind", std::string(to_string(in.kind))}, {"source", source}, {"digest", in.digest}});
  }
  Json params = Json::array();
  for (const auto& p : spec.parameters) params.push_back(Json{{"name", p.name}, {"value", p.value}});

  Json j;
  j["job_id"] = spec.job_id;
  j["tool_id"] = spec.tool_id;
  j["tool_version"] = spec.tool_version;
  j["inputs"] = inputs;
  j["parameters"] = params;
  if (spec.resources) j["resources"] = to_json(*spec.resources);
  j["output_names"] = spec.output_names;
  j["notify_to"] = spec.notify_to;
  return j;
}

JobSpec jobspec_from_json(const Json& j) {
  expect_keys(j, "job spec",
              {"job_id", "tool_id", "tool_version", "inputs", "parameters", "resources", "output_names", "notify_to"});
  JobSpec spec;
  spec.job_id = get_string_or(j, "job spec", "job_id", "");
  spec.tool_id = get_string(j, "job spec", "tool_id");
  spec.tool_version = get_string_or(j, "job spec", "tool_version", "");
  if (j.contains("inputs")) {
    const Json& inputs = j.at("inputs");
    if (!inputs.is_array()) fail(ErrorCode::InvalidArgument, "job spec.inputs must be an array");
    for (const auto& item : inputs) {
      expect_keys(item, "input", {"name", "kind", "source", "digest"});
      DataRef ref;
      ref.name = get_string(item, "input", "name");
      ref.kind = data_kind_from_string(get_string(item, "input", "kind"));
      const Json& source = require(item, "input", "source");
      switch (ref.kind) {
        case DataKind::Inline:
          expect_keys(source, "INLINE source", {"path", "size_bytes"});
          ref.local_path = get_string(source, "INLINE source", "path");
          ref.size_bytes = get_uint(source, "INLINE source", "size_bytes");
          ref.digest = digest_field(item, "input", "digest", false);
          break;
        case DataKind::ObjectStore:
          expect_keys(source, "OBJECT_STORE source", {"endpoint", "key"});
          ref.endpoint_id = get_string(source, "OBJECT_STORE source", "endpoint");
          ref.object_key = get_string(source, "OBJECT_STORE source", "key");
          ref.digest = digest_field(item, "input", "digest", true);
          break;
        case DataKind::ReferenceBundle: {
          expect_keys(source, "REFERENCE_BUNDLE source", {"bundle_digest"});
          std::string bundle = digest_field(source, "REFERENCE_BUNDLE source", "bundle_digest", false);
          ref.digest = digest_field(item, "input", "digest", true);
          if (ref.digest.empty()) ref.digest = bundle;
          if (ref.digest != bundle) fail(ErrorCode::BadDigest, "bundle input '" + ref.name + "' digest differs from its source");
          break;
        }
      }
      spec.inputs.push_back(std::move(ref));
    }
  }
  if (j.contains("parameters")) {
    const Json& params = j.at("parameters");
    if (!params.is_array()) fail(ErrorCode::InvalidArgument, "job spec.parameters must be an array");
    for (const auto& item : params) {
      expect_keys(item, "parameter", {"name", "value"});
      spec.parameters.push_back({get_string(item, "parameter", "name"), get_string(item, "parameter", "value")});
    }
  }
  if (j.contains("resources")) spec.resources = resources_from_json(j.at("resources"));
  if (j.contains("output_names")) {
    const Json& outs = j.at("output_names");
    if (!outs.is_array()) fail(ErrorCode::InvalidArgument, "job spec.output_names must be an array");
    for (const auto& o : outs) {
      if (!o.is_string()) fail(ErrorCode::InvalidArgument, "job spec.output_names entries must be strings");
      spec.output_names.push_back(o.get<std::string>());
    }
  }
  spec.notify_to = get_string_or(j, "job spec", "notify_to", "");
  return spec;
}

Json to_json(const ReproducibilityManifest& m) {
  Json j;
  j["job_id"] = m.job_id;
  j["cluster_id"] = m.cluster_id;
  j["tool_id"] = m.tool_id;
  j["tool_version"] = m.tool_version;
  j["container_digest"] = m.container_digest;
  j["input_digests"] = digest_list_to_json(m.input_digests);
  j["script_digest"] = m.script_digest;
  j["exit_code"] = m.exit_code;
  j["output_digests"] = digest_list_to_json(m.output_digests);
  return j;
}

ReproducibilityManifest manifest_from_json(const Json& j) {
  constexpr std::string_view kWhat = "manifest";
  expect_keys(j, kWhat,
              {"job_id", "cluster_id", "tool_id", "tool_version", "container_digest", "input_digests", "script_digest",
               "exit_code", "output_digests"});
  ReproducibilityManifest m;
  m.job_id = get_string(j, kWhat, "job_id");
  m.cluster_id = get_string(j, kWhat, "cluster_id");
  m.tool_id = get_string(j, kWhat, "tool_id");
  m.tool_version = get_string(j, kWhat, "tool_version");
  m.container_digest = digest_field(j, kWhat, "container_digest", false);
  m.input_digests = digest_list_from_json(require(j, kWhat, "input_digests"), "manifest.input_digests");
  m.script_digest = digest_field(j, kWhat, "script_digest", false);
  m.exit_code = static_cast<int>(get_int(j, kWhat, "exit_code"));
  m.output_digests = digest_list_from_json(require(j, kWhat, "output_digests"), "manifest.output_digests");
  return m;
}

Json to_json(const StagedLayout& l) {
  Json j;
  j["job_id"] = l.job_id;
  j["work_dir"] = l.work_dir;
  j["staged"] = l.staged;
  j["digests"] = l.digests;
  j["bundle_paths"] = l.bundle_paths;
  j["container_path"] = l.container_path;
  return j;
}

StagedLayout layout_from_json(const Json& j) {
  expect_keys(j, "layout", {"job_id", "work_dir", "staged", "digests", "bundle_paths", "container_path"});
  StagedLayout l;
  l.job_id = get_string(j, "layout", "job_id");
  l.work_dir = get_string(j, "layout", "work_dir");
  l.staged = require(j, "layout", "staged").get<std::map<std::string, std::string>>();
  l.digests = require(j, "layout", "digests").get<std::map<std::string, std::string>>();
  l.bundle_paths = require(j, "layout", "bundle_paths").get<std::map<std::string, std::string>>();
  l.container_path = get_string(j, "layout", "container_path");
  return l;
}

std::string dump_document(const Json& j) { return j.dump(2) + "\n"; }

Json parse_document(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed JSON document: ") + e.what());
  }
}

}  // namespace crossbound
