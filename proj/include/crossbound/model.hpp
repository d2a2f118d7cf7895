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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crossbound {

struct ResourceRequest {
  std::uint32_t cpus = 1;
  std::uint64_t mem_mb = 1024;
  std::uint32_t gpus = 0;
  std::uint64_t walltime_s = 3600;

  /// Throws InvalidArgument unless cpus, mem_mb and walltime_s are positive.
  void validate() const;

  /// cpus × walltime_s, the unit the quota ledger counts in.
  std::int64_t core_seconds() const { return static_cast<std::int64_t>(cpus) * static_cast<std::int64_t>(walltime_s); }

  friend bool operator==(const ResourceRequest&, const ResourceRequest&) = default;
};

enum class DataKind { Inline, ObjectStore, ReferenceBundle };

std::string_view to_string(DataKind kind) noexcept;
DataKind data_kind_from_string(std::string_view text);

/// A job input. Which source fields are meaningful depends on `kind`:
/// INLINE uses local_path + size_bytes, OBJECT_STORE uses endpoint_id +
/// object_key, REFERENCE_BUNDLE is addressed purely by `digest`.
struct DataRef {
  std::string name;
  DataKind kind = DataKind::Inline;
  std::string local_path;
  std::uint64_t size_bytes = 0;
  std::string endpoint_id;
  std::string object_key;
  std::string digest;  // empty only for OBJECT_STORE (resolved on fetch)

  friend bool operator==(const DataRef&, const DataRef&) = default;
};

struct Parameter {
  std::string name;
  std::string value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct JobSpec {
  std::string job_id;
  std::string tool_id;
  std::string tool_version;  // empty: highest installed version
  std::vector<DataRef> inputs;
  std::vector<Parameter> parameters;
  std::optional<ResourceRequest> resources;
  std::vector<std::string> output_names;
  std::string notify_to;

  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

struct DeclaredInput {
  std::string name;
  std::optional<DataKind> kind;  // unset accepts any kind

  friend bool operator==(const DeclaredInput&, const DeclaredInput&) = default;
};

struct DeclaredParam {
  std::string name;
  std::optional<std::string> default_value;

  friend bool operator==(const DeclaredParam&, const DeclaredParam&) = default;
};

struct ToolDescriptor {
  std::string tool_id;
  std::string version;
  std::string container_image;
  std::string container_digest;  // bare hex
  std::string command_template;
  std::vector<DeclaredInput> declared_inputs;
  std::vector<DeclaredParam> declared_params;
  std::vector<std::string> declared_outputs;
  ResourceRequest default_resources;
  std::vector<std::string> reference_bundles;  // bare hex digests

  const DeclaredInput* find_input(std::string_view name) const;
  const DeclaredParam* find_param(std::string_view name) const;
  bool has_output(std::string_view name) const;

  friend bool operator==(const ToolDescriptor&, const ToolDescriptor&) = default;
};

using DigestList = std::vector<std::pair<std::string, std::string>>;  // (name, digest), sorted by name

struct ReproducibilityManifest {
  std::string job_id;
  std::string cluster_id;
  std::string tool_id;
  std::string tool_version;
  std::string container_digest;
  DigestList input_digests;
  std::string script_digest;
  int exit_code = 0;
  DigestList output_digests;

  friend bool operator==(const ReproducibilityManifest&, const ReproducibilityManifest&) = default;
};

struct ReproReport {
  bool bit_identical = false;
  bool same_setup = false;
  std::vector<std::string> differences;  // field names, e.g. "output_digests[a.txt]"
};

/// BIT_IDENTICAL iff output digests agree element-wise; SAME_SETUP iff the
/// container, tool identity, inputs and script agree. Symmetric.
ReproReport verify_reproduction(const ReproducibilityManifest& a, const ReproducibilityManifest& b);

std::string render_report_text(const ReproReport& report);

// Placeholders are `{input:NAME}`, `{param:NAME}` and `{output:NAME}`.
struct Placeholder {
  enum class Kind { Input, Param, Output };
  Kind kind;
  std::string name;
  std::size_t begin;  // offset of '{'
  std::size_t end;    // one past '}'
};

/// Throws PlaceholderError on any '{' or '}' that is not part of a
/// well-formed placeholder.
std::vector<Placeholder> parse_placeholders(std::string_view text);

/// [A-Za-z0-9._-]+, excluding "." and "..".
bool is_valid_name(std::string_view name) noexcept;

/// Relative path of valid names separated by '/'; no "..", no leading '/'.
bool is_safe_relative_path(std::string_view path) noexcept;

}  // namespace crossbound
