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

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossbound/clock.hpp"
#include "crossbound/model.hpp"

namespace crossbound {

/// Parses the descriptor XML dialect:
///
///   <tool id="shmatch" version="1.0">
///     <container image="unite/shmatch.sif" digest="sha256:..."/>
///     <command>shmatch -i {input:seqs} -n {param:n} -o {output:hits.txt}</command>
///     <inputs><input name="seqs"/></inputs>
///     <params><param name="n" default="10"/></params>
///     <outputs><output name="hits.txt"/></outputs>
///     <resources cpus="4" mem_mb="8192" gpus="0" walltime_s="7200"/>
///     <bundles><bundle digest="sha256:..."/></bundles>
///   </tool>
///
/// `<inputs>`, `<params>`, `<outputs>` and `<bundles>` may be omitted.
/// ParseError for malformed XML, SchemaError for structural problems,
/// PlaceholderError when the command references an undeclared name.
ToolDescriptor parse_descriptor(std::string_view document);

/// Canonical XML form; parse_descriptor(serialize_descriptor(d)) == d.
std::string serialize_descriptor(const ToolDescriptor& descriptor);

/// Dot-separated comparison: numeric where both segments are digits,
/// lexicographic otherwise, shorter prefix first. Ties fall back to a
/// plain string comparison so the order is strict.
int compare_versions(std::string_view a, std::string_view b);

struct VersionLess {
  bool operator()(const std::string& a, const std::string& b) const { return compare_versions(a, b) < 0; }
};

struct InstallLogEntry {
  Timestamp at;
  std::string tool_id;
  std::string version;
};

/// Versioned tool registry. Installed (id, version) pairs are immutable and
/// never removed. Readers share, install is exclusive.
class ToolRegistry {
 public:
  explicit ToolRegistry(const Clock* clock = nullptr);

  /// Opens (creating if needed) a registry directory holding one
  /// `<id>__<version>.xml` per entry; later installs are written through.
  static ToolRegistry open(const std::filesystem::path& dir, const Clock* clock = nullptr);

  ToolRegistry(ToolRegistry&& other) noexcept;

  /// Idempotent for identical content; DuplicateVersion otherwise.
  void install(const ToolDescriptor& descriptor);

  /// Exact match when `version` is set, else the highest installed version.
  ToolDescriptor resolve(const std::string& tool_id, const std::optional<std::string>& version = std::nullopt) const;

  bool contains(const std::string& tool_id, const std::string& version) const;
  std::vector<std::pair<std::string, std::string>> list() const;
  std::vector<InstallLogEntry> install_log() const;

 private:
  const Clock* clock_;
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::map<std::string, ToolDescriptor, VersionLess>> entries_;
  std::vector<InstallLogEntry> log_;
};

}  // namespace crossbound
