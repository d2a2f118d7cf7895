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

#include "crossbound/model.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "crossbound/error.hpp"

namespace crossbound {

void ResourceRequest::validate() const {
  if (cpus == 0) fail(ErrorCode::InvalidArgument, "resources.cpus must be positive");
  if (mem_mb == 0) fail(ErrorCode::InvalidArgument, "resources.mem_mb must be positive");
  if (walltime_s == 0) fail(ErrorCode::InvalidArgument, "resources.walltime_s must be positive");
}

std::string_view to_string(DataKind kind) noexcept {
  switch (kind) {
    case DataKind::Inline: return "INLINE";
    case DataKind::ObjectStore: return "OBJECT_STORE";
    case DataKind::ReferenceBundle: return "REFERENCE_BUNDLE";
  }
  return "INLINE";
}

DataKind data_kind_from_string(std::string_view text) {
  if (text == "INLINE") return DataKind::Inline;
  if (text == "OBJECT_STORE") return DataKind::ObjectStore;
  if (text == "REFERENCE_BUNDLE") return DataKind::ReferenceBundle;
  fail(ErrorCode::InvalidArgument, "unknown data kind '" + std::string(text) + "'");
}

const DeclaredInput* ToolDescriptor::find_input(std::string_view name) const {
  auto it = std::find_if(declared_inputs.begin(), declared_inputs.end(), [&](const auto& i) { return i.name == name; });
  return it == declared_inputs.end() ? nullptr : &*it;
}

const DeclaredParam* ToolDescriptor::find_param(std::string_view name) const {
  auto it = std::find_if(declared_params.begin(), declared_params.end(), [&](const auto& p) { return p.name == name; });
  return it == declared_params.end() ? nullptr : &*it;
}

bool ToolDescriptor::has_output(std::string_view name) const {
  return std::find(declared_outputs.begin(), declared_outputs.end(), name) != declared_outputs.end();
}

namespace {

void diff_lists(const char* field, const DigestList& a, const DigestList& b, std::vector<std::string>& out) {
  std::map<std::string, std::string> ma(a.begin(), a.end());
  std::map<std::string, std::string> mb(b.begin(), b.end());
  std::set<std::string> names;
  for (const auto& [n, _] : ma) names.insert(n);
  for (const auto& [n, _] : mb) names.insert(n);
  for (const auto& n : names) {
    auto ia = ma.find(n);
    auto ib = mb.find(n);
    if (ia == ma.end() || ib == mb.end() || ia->second != ib->second) {
      out.push_back(std::string(field) + "[" + n + "]");
    }
  }
}

}  // namespace

ReproReport verify_reproduction(const ReproducibilityManifest& a, const ReproducibilityManifest& b) {
  ReproReport r;
  auto note = [&](bool differs, const char* field) {
    if (differs) r.differences.emplace_back(field);
  };
  note(a.job_id != b.job_id, "job_id");
  note(a.cluster_id != b.cluster_id, "cluster_id");
  note(a.tool_id != b.tool_id, "tool_id");
  note(a.tool_version != b.tool_version, "tool_version");
  note(a.container_digest != b.container_digest, "container_digest");
  diff_lists("input_digests", a.input_digests, b.input_digests, r.differences);
  note(a.script_digest != b.script_digest, "script_digest");
  note(a.exit_code != b.exit_code, "exit_code");
  diff_lists("output_digests", a.output_digests, b.output_digests, r.differences);

  r.bit_identical = a.output_digests == b.output_digests;
  r.same_setup = a.container_digest == b.container_digest && a.tool_id == b.tool_id &&
                 a.tool_version == b.tool_version && a.input_digests == b.input_digests &&
                 a.script_digest == b.script_digest;
  return r;
}

std::string render_report_text(const ReproReport& report) {
  std::string out;
  out += report.bit_identical ? "BIT_IDENTICAL\n" : "NOT_BIT_IDENTICAL\n";
  out += report.same_setup ? "SAME_SETUP\n" : "DIFFERENT_SETUP\n";
  for (const auto& d : report.differences) out += "differs: " + d + "\n";
  return out;
}

bool is_valid_name(std::string_view name) noexcept {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
           c == '-';
  });
}

bool is_safe_relative_path(std::string_view path) noexcept {
  if (path.empty() || path.front() == '/') return false;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    std::string_view seg = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (!is_valid_name(seg)) return false;
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return true;
}

std::vector<Placeholder> parse_placeholders(std::string_view text) {
  std::vector<Placeholder> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '}') fail(ErrorCode::PlaceholderError, "unmatched '}' at offset " + std::to_string(i));
    if (c != '{') {
      ++i;
      continue;
    }
    std::size_t close = text.find('}', i);
    if (close == std::string_view::npos) fail(ErrorCode::PlaceholderError, "unterminated '{' at offset " + std::to_string(i));
    std::string_view body = text.substr(i + 1, close - i - 1);
    std::size_t colon = body.find(':');
    if (colon == std::string_view::npos) fail(ErrorCode::PlaceholderError, "placeholder without kind: {" + std::string(body) + "}");
    std::string_view kind = body.substr(0, colon);
    std::string_view name = body.substr(colon + 1);
    Placeholder p{};
    if (kind == "input") {
      p.kind = Placeholder::Kind::Input;
    } else if (kind == "param") {
      p.kind = Placeholder::Kind::Param;
    } else if (kind == "output") {
      p.kind = Placeholder::Kind::Output;
    } else {
      fail(ErrorCode::PlaceholderError, "unknown placeholder kind '" + std::string(kind) + "'");
    }
    bool ok = p.kind == Placeholder::Kind::Output ? is_safe_relative_path(name) : is_valid_name(name);
    if (!ok) fail(ErrorCode::PlaceholderError, "bad placeholder name '" + std::string(name) + "'");
    p.name = std::string(name);
    p.begin = i;
    p.end = close + 1;
    out.push_back(std::move(p));
    i = close + 1;
  }
  return out;
}

}  // namespace crossbound
