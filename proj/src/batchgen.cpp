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

#include "crossbound/batchgen.hpp"

#include <fmt/format.h>

#include <charconv>
#include <set>

#include "crossbound/codec.hpp"
#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"
#include "crossbound/transport.hpp"

namespace crossbound {
namespace {

constexpr std::uint64_t kDayPrefixThreshold = 100ull * 3600;

bool under(const std::string& path, const std::string& root) {
  return path.size() > root.size() + 1 && path.compare(0, root.size(), root) == 0 && path[root.size()] == '/';
}

[[noreturn]] void malformed(const std::string& what) { fail(ErrorCode::MalformedDirective, what); }

// Canonical unsigned integer: digits only, no leading zeros.
std::uint64_t parse_canonical(std::string_view s, const std::string& what) {
  if (s.empty() || (s.size() > 1 && s.front() == '0')) malformed(what + ": '" + std::string(s) + "'");
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) malformed(what + ": '" + std::string(s) + "'");
  return v;
}

std::uint64_t two_digits(std::string_view s, std::uint64_t max, std::string_view whole) {
  if (s.size() != 2 || s[0] < '0' || s[0] > '9' || s[1] < '0' || s[1] > '9') {
    malformed("time must be zero-padded HH:MM:SS or D-HH:MM:SS, got '" + std::string(whole) + "'");
  }
  std::uint64_t v = static_cast<std::uint64_t>((s[0] - '0') * 10 + (s[1] - '0'));
  if (v > max) malformed("time field out of range in '" + std::string(whole) + "'");
  return v;
}

}  // namespace

std::string format_walltime(std::uint64_t seconds) {
  std::uint64_t h = seconds / 3600, m = (seconds / 60) % 60, s = seconds % 60;
  if (seconds < kDayPrefixThreshold) return fmt::format("{:02}:{:02}:{:02}", h, m, s);
  return fmt::format("{}-{:02}:{:02}:{:02}", h / 24, h % 24, m, s);
}

std::uint64_t parse_walltime(std::string_view text) {
  std::string_view rest = text;
  std::uint64_t days = 0;
  bool has_days = false;
  if (auto dash = rest.find('-'); dash != std::string_view::npos) {
    days = parse_canonical(rest.substr(0, dash), "time day count");
    rest = rest.substr(dash + 1);
    has_days = true;
  }
  if (rest.size() != 8 || rest[2] != ':' || rest[5] != ':') {
    malformed("time must be zero-padded HH:MM:SS or D-HH:MM:SS, got '" + std::string(text) + "'");
  }
  std::uint64_t h = two_digits(rest.substr(0, 2), has_days ? 23 : 99, text);
  std::uint64_t m = two_digits(rest.substr(3, 2), 59, text);
  std::uint64_t s = two_digits(rest.substr(6, 2), 59, text);
  std::uint64_t total = ((days * 24 + h) * 60 + m) * 60 + s;
  if (has_days && total < kDayPrefixThreshold) malformed("day-prefixed time below 100 hours: '" + std::string(text) + "'");
  if (total == 0) malformed("time must be positive");
  return total;
}

BatchScript render_batch_script(const ValidatedJob& job, const StagedLayout& layout, const ClusterProfile& profile) {
  const std::string& root = profile.scratch_root;
  if (layout.job_id != job.job_id()) fail(ErrorCode::LayoutIncomplete, "layout belongs to job '" + layout.job_id + "'");
  if (!under(layout.work_dir, root)) fail(ErrorCode::LayoutIncomplete, "work_dir '" + layout.work_dir + "' not under " + root);
  if (!under(layout.container_path, root)) fail(ErrorCode::LayoutIncomplete, "container image not staged under " + root);
  for (const auto& in : job.tool.declared_inputs) {
    auto it = layout.staged.find(in.name);
    if (it == layout.staged.end()) fail(ErrorCode::LayoutIncomplete, "input '" + in.name + "' not staged");
    if (!under(it->second, root)) fail(ErrorCode::LayoutIncomplete, "input '" + in.name + "' staged outside " + root);
  }

  const ResourceRequest& r = job.resources;
  std::string text;
  text += "#!/bin/bash\n";
  text += fmt::format("#SBATCH --job-name={}\n", job.job_id());
  text += fmt::format("#SBATCH --cpus-per-task={}\n", r.cpus);
  text += fmt::format("#SBATCH --mem={}M\n", r.mem_mb);
  text += fmt::format("#SBATCH --time={}\n", format_walltime(r.walltime_s));
  if (r.gpus > 0) text += fmt::format("#SBATCH --gres=gpu:{}\n", r.gpus);
  text += fmt::format("#SBATCH --output={}/job.out\n", layout.work_dir);
  text += fmt::format("#SBATCH --error={}/job.err\n", layout.work_dir);
  text += "\n";
  text += fmt::format("cd {}\n", layout.work_dir);
  text += fmt::format("{} exec {} {}\n", profile.container_runtime_cmd, layout.container_path, render_command(job, layout));
  text += kScriptFormatLine;
  text += "\n";
  return BatchScript{text, sha256_hex(text)};
}

ParsedScript parse_directives(std::string_view text) {
  ParsedScript out;
  std::set<std::string> seen;
  bool in_body = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') malformed("CR line endings are not accepted");

    if (line.starts_with("#SBATCH")) {
      if (in_body) malformed("directive after the first command line");
      std::string_view body = line.substr(7);
      if (!body.starts_with(" --")) malformed("directive must read '#SBATCH --key=value': '" + std::string(line) + "'");
      body.remove_prefix(3);
      auto eq = body.find('=');
      if (eq == std::string_view::npos) malformed("directive without '=': '" + std::string(line) + "'");
      std::string key(body.substr(0, eq));
      std::string_view value = body.substr(eq + 1);
      if (value.empty()) malformed("empty value for --" + key);
      if (!seen.insert(key).second) malformed("duplicate --" + key);
      if (key == "job-name") {
        out.job_name = std::string(value);
      } else if (key == "cpus-per-task") {
        out.resources.cpus = static_cast<std::uint32_t>(parse_canonical(value, "cpus-per-task"));
      } else if (key == "mem") {
        if (!value.ends_with("M")) malformed("mem must be given in M: '" + std::string(value) + "'");
        out.resources.mem_mb = parse_canonical(value.substr(0, value.size() - 1), "mem");
      } else if (key == "time") {
        out.resources.walltime_s = parse_walltime(value);
      } else if (key == "gres") {
        if (!value.starts_with("gpu:")) malformed("only gpu gres is supported: '" + std::string(value) + "'");
        out.resources.gpus = static_cast<std::uint32_t>(parse_canonical(value.substr(4), "gres gpu count"));
        if (out.resources.gpus == 0) malformed("gres gpu count must be positive");
      } else if (key == "output") {
        out.output_path = std::string(value);
      } else if (key == "error") {
        out.error_path = std::string(value);
      } else {
        malformed("unknown directive --" + key);
      }
      continue;
    }
    if (line.empty() || line.starts_with("#")) continue;
    in_body = true;
    if (line.starts_with("cd ")) {
      if (out.work_dir) malformed("more than one cd line");
      out.work_dir = std::string(line.substr(3));
    } else if (!out.command) {
      auto argv = split_command(line);
      if (argv.size() < 4 || argv[1] != "exec") malformed("expected '<runtime> exec <image> <command>'");
      out.runtime_cmd = argv[0];
      out.container_path = argv[2];
      // the command is everything after the third token, verbatim
      std::size_t cursor = 0;
      for (int token = 0; token < 3; ++token) {
        cursor = line.find_first_not_of(" \t", cursor);
        cursor = line.find_first_of(" \t", cursor);
      }
      out.command = std::string(line.substr(line.find_first_not_of(" \t", cursor)));
    } else {
      malformed("unexpected extra command line");
    }
  }
  for (const char* required : {"job-name", "cpus-per-task", "mem", "time", "output", "error"}) {
    if (!seen.contains(required)) malformed(std::string("missing --") + required);
  }
  return out;
}

std::string render_job_context(const ValidatedJob& job, const StagedLayout& layout) {
  Json params = Json::array();
  for (const auto& p : job.parameters) params.push_back(Json{{"name", p.name}, {"value", p.value}});
  Json j;
  j["job_id"] = job.job_id();
  j["tool_id"] = job.tool.tool_id;
  j["tool_version"] = job.tool.version;
  j["parameters"] = params;
  j["inputs"] = layout.staged;
  j["outputs"] = job.outputs;
  return dump_document(j);
}

JobContext parse_job_context(std::string_view text) {
  using namespace json_detail;
  Json j = parse_document(text);
  expect_keys(j, "job context", {"job_id", "tool_id", "tool_version", "parameters", "inputs", "outputs"});
  JobContext c;
  c.job_id = get_string(j, "job context", "job_id");
  c.tool_id = get_string(j, "job context", "tool_id");
  c.tool_version = get_string(j, "job context", "tool_version");
  for (const auto& p : require(j, "job context", "parameters")) {
    c.parameters.push_back({get_string(p, "parameter", "name"), get_string(p, "parameter", "value")});
  }
  c.inputs = require(j, "job context", "inputs").get<std::map<std::string, std::string>>();
  c.outputs = require(j, "job context", "outputs").get<std::vector<std::string>>();
  for (const auto& o : c.outputs) {
    if (!is_safe_relative_path(o)) fail(ErrorCode::BadPath, "job context output '" + o + "' is unsafe");
  }
  return c;
}

}  // namespace crossbound
