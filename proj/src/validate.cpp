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

#include "crossbound/validate.hpp"

#include <algorithm>
#include <set>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/tool_registry.hpp"

namespace crossbound {
namespace {

// Values are substituted verbatim into a shell line, so anything that would
// need quoting is refused rather than guessed at.
void check_param_value(const std::string& name, const std::string& value) {
  for (unsigned char c : value) {
    if (c <= 0x20 || c > 0x7e || c == '{' || c == '}') {
      fail(ErrorCode::BadParameter, "parameter '" + name + "' value contains whitespace, braces or non-printable bytes");
    }
  }
  if (value.empty()) fail(ErrorCode::BadParameter, "parameter '" + name + "' has an empty value");
}

void check_data_ref(const DataRef& ref) {
  if (!is_valid_name(ref.name)) fail(ErrorCode::BadPath, "input name '" + ref.name + "' is not a plain file name");
  switch (ref.kind) {
    case DataKind::Inline:
      if (ref.local_path.empty()) fail(ErrorCode::InvalidArgument, "INLINE input '" + ref.name + "' has no local path");
      if (!is_valid_digest(ref.digest)) fail(ErrorCode::BadDigest, "INLINE input '" + ref.name + "' needs a sha256 digest");
      break;
    case DataKind::ObjectStore:
      if (ref.endpoint_id.empty() || ref.object_key.empty()) {
        fail(ErrorCode::InvalidArgument, "OBJECT_STORE input '" + ref.name + "' needs endpoint and key");
      }
      if (!is_safe_relative_path(ref.object_key)) fail(ErrorCode::BadPath, "object key '" + ref.object_key + "' is unsafe");
      if (!ref.digest.empty() && !is_valid_digest(ref.digest)) {
        fail(ErrorCode::BadDigest, "OBJECT_STORE input '" + ref.name + "' has a malformed digest");
      }
      break;
    case DataKind::ReferenceBundle:
      if (!is_valid_digest(ref.digest)) fail(ErrorCode::BadDigest, "bundle input '" + ref.name + "' needs a sha256 digest");
      break;
  }
}

}  // namespace

const std::string* ValidatedJob::parameter(std::string_view name) const {
  auto it = std::find_if(parameters.begin(), parameters.end(), [&](const Parameter& p) { return p.name == name; });
  return it == parameters.end() ? nullptr : &it->value;
}

ValidatedJob validate_jobspec(const JobSpec& spec, const ToolRegistry& registry) {
  if (!is_valid_name(spec.job_id)) fail(ErrorCode::InvalidArgument, "job_id '" + spec.job_id + "' is not a valid identifier");

  ValidatedJob job;
  job.tool = registry.resolve(spec.tool_id, spec.tool_version.empty() ? std::nullopt
                                                                      : std::optional<std::string>(spec.tool_version));
  job.spec = spec;
  job.spec.tool_version = job.tool.version;

  std::set<std::string> input_names;
  for (const auto& ref : spec.inputs) {
    check_data_ref(ref);
    if (!input_names.insert(ref.name).second) fail(ErrorCode::DuplicateInput, "input '" + ref.name + "' given twice");
    const DeclaredInput* declared = job.tool.find_input(ref.name);
    if (declared == nullptr) {
      fail(ErrorCode::InvalidArgument, "input '" + ref.name + "' is not declared by " + job.tool.tool_id);
    }
    if (declared->kind && *declared->kind != ref.kind) {
      fail(ErrorCode::InvalidArgument, "input '" + ref.name + "' must be " + std::string(to_string(*declared->kind)));
    }
  }
  for (const auto& declared : job.tool.declared_inputs) {
    if (!input_names.contains(declared.name)) fail(ErrorCode::MissingInput, "declared input '" + declared.name + "' has no data");
  }

  std::set<std::string> param_names;
  for (const auto& p : spec.parameters) {
    if (!is_valid_name(p.name) || job.tool.find_param(p.name) == nullptr) {
      fail(ErrorCode::BadParameter, "parameter '" + p.name + "' is not declared by " + job.tool.tool_id);
    }
    if (!param_names.insert(p.name).second) fail(ErrorCode::BadParameter, "parameter '" + p.name + "' given twice");
    check_param_value(p.name, p.value);
    job.parameters.push_back(p);
  }
  for (const auto& declared : job.tool.declared_params) {
    if (param_names.contains(declared.name) || !declared.default_value) continue;
    check_param_value(declared.name, *declared.default_value);
    job.parameters.push_back({declared.name, *declared.default_value});
  }

  for (const auto& p : parse_placeholders(job.tool.command_template)) {
    if (p.kind == Placeholder::Kind::Param && job.parameter(p.name) == nullptr) {
      fail(ErrorCode::UnboundPlaceholder, "{param:" + p.name + "} has neither a value nor a default");
    }
  }

  job.outputs = spec.output_names.empty() ? job.tool.declared_outputs : spec.output_names;
  std::set<std::string> output_names;
  for (const auto& o : job.outputs) {
    if (!is_safe_relative_path(o)) fail(ErrorCode::BadPath, "output '" + o + "' escapes the work directory");
    if (!output_names.insert(o).second) fail(ErrorCode::BadPath, "output '" + o + "' listed twice");
  }

  job.resources = spec.resources.value_or(job.tool.default_resources);
  job.resources.validate();
  return job;
}

std::string render_command(const ValidatedJob& job, const StagedLayout& layout) {
  const std::string& tmpl = job.tool.command_template;
  std::string out;
  std::size_t pos = 0;
  for (const auto& p : parse_placeholders(tmpl)) {
    out.append(tmpl, pos, p.begin - pos);
    switch (p.kind) {
      case Placeholder::Kind::Input: {
        auto it = layout.staged.find(p.name);
        if (it == layout.staged.end()) fail(ErrorCode::UnboundPlaceholder, "{input:" + p.name + "} is not staged");
        out += it->second;
        break;
      }
      case Placeholder::Kind::Param: {
        const std::string* v = job.parameter(p.name);
        if (v == nullptr) fail(ErrorCode::UnboundPlaceholder, "{param:" + p.name + "} has no value");
        out += *v;
        break;
      }
      case Placeholder::Kind::Output:
        if (layout.work_dir.empty()) fail(ErrorCode::UnboundPlaceholder, "{output:" + p.name + "} needs a work directory");
        out += layout.work_dir + "/" + p.name;
        break;
    }
    pos = p.end;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

}  // namespace crossbound
