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

#include <string>
#include <vector>

#include "crossbound/layout.hpp"
#include "crossbound/model.hpp"

namespace crossbound {

class ToolRegistry;

/// A JobSpec bound to a resolved descriptor. Immutable once built.
struct ValidatedJob {
  JobSpec spec;  // tool_version filled with the resolved version
  ToolDescriptor tool;
  ResourceRequest resources;
  std::vector<Parameter> parameters;  // spec order, then unset defaults in declaration order
  std::vector<std::string> outputs;   // names fetched after completion

  const std::string& job_id() const { return spec.job_id; }
  const std::string* parameter(std::string_view name) const;
};

ValidatedJob validate_jobspec(const JobSpec& spec, const ToolRegistry& registry);

/// Substitutes every placeholder of the tool's command template.
std::string render_command(const ValidatedJob& job, const StagedLayout& layout);

}  // namespace crossbound
