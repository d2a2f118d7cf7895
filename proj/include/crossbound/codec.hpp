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

#include <json.hpp>

#include <string>
#include <string_view>

#include "crossbound/layout.hpp"
#include "crossbound/model.hpp"

namespace crossbound {

using Json = nlohmann::ordered_json;

// JSON documents for the core value types. Parsing is strict: unknown keys
// and wrong types are rejected with InvalidArgument. Serialization emits keys
// in a fixed order so documents round-trip byte for byte.

Json to_json(const ResourceRequest& r);
ResourceRequest resources_from_json(const Json& j);

Json to_json(const JobSpec& spec);
JobSpec jobspec_from_json(const Json& j);

Json to_json(const ReproducibilityManifest& m);
ReproducibilityManifest manifest_from_json(const Json& j);

Json to_json(const StagedLayout& layout);
StagedLayout layout_from_json(const Json& j);

/// Pretty-printed with two-space indent and a trailing newline.
std::string dump_document(const Json& j);
Json parse_document(std::string_view text);

inline std::string dump_jobspec(const JobSpec& spec) { return dump_document(to_json(spec)); }
inline JobSpec load_jobspec(std::string_view text) { return jobspec_from_json(parse_document(text)); }
inline std::string dump_manifest(const ReproducibilityManifest& m) { return dump_document(to_json(m)); }
inline ReproducibilityManifest load_manifest(std::string_view text) { return manifest_from_json(parse_document(text)); }

// Helpers shared by the other codecs.
namespace json_detail {
void expect_keys(const Json& j, std::string_view what, std::initializer_list<std::string_view> allowed);
const Json& require(const Json& j, std::string_view what, const char* key);
std::string get_string(const Json& j, std::string_view what, const char* key);
std::string get_string_or(const Json& j, std::string_view what, const char* key, std::string fallback);
std::uint64_t get_uint(const Json& j, std::string_view what, const char* key);
std::int64_t get_int(const Json& j, std::string_view what, const char* key);
}  // namespace json_detail

}  // namespace crossbound
