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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crossbound/cluster_registry.hpp"
#include "crossbound/layout.hpp"
#include "crossbound/validate.hpp"

namespace crossbound {

inline constexpr std::string_view kScriptFormatLine = "# crossbound-script-v1";
inline constexpr std::string_view kScriptName = "job.sh";
inline constexpr std::string_view kContextName = "job.json";

struct BatchScript {
  std::string text;
  std::string script_digest;
};

/// Renders, in order: shebang; job-name, cpus-per-task, mem, time, gres (only
/// when gpus > 0), output and error directives; a blank line; `cd <work_dir>`;
/// the container exec line; the format version comment.
BatchScript render_batch_script(const ValidatedJob& job, const StagedLayout& layout, const ClusterProfile& profile);

/// HH:MM:SS below 100 hours, D-HH:MM:SS from there on.
std::string format_walltime(std::uint64_t seconds);
/// Strict inverse of format_walltime; MalformedDirective otherwise.
std::uint64_t parse_walltime(std::string_view text);

struct ParsedScript {
  std::string job_name;
  ResourceRequest resources;
  std::string output_path;
  std::string error_path;
  std::optional<std::string> work_dir;  // from the `cd` line
  std::optional<std::string> runtime_cmd;
  std::optional<std::string> container_path;
  std::optional<std::string> command;
};

/// Reads back the directive block (and the cd/exec lines when present).
/// Unknown, duplicate, missing or non-canonical directives are rejected.
ParsedScript parse_directives(std::string_view text);

/// Sidecar consumed by the simulated tool: identity, parameters, staged
/// input paths and the outputs the tool produces.
struct JobContext {
  std::string job_id;
  std::string tool_id;
  std::string tool_version;
  std::vector<Parameter> parameters;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
};

std::string render_job_context(const ValidatedJob& job, const StagedLayout& layout);
JobContext parse_job_context(std::string_view text);

}  // namespace crossbound
