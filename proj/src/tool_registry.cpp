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

#include "crossbound/tool_registry.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"

namespace crossbound {
namespace pt = boost::property_tree;

namespace {

constexpr const char* kAttr = "<xmlattr>";

std::optional<std::string> attr(const pt::ptree& node, const char* name) {
  auto attrs = node.get_child_optional(kAttr);
  if (!attrs) return std::nullopt;
  auto v = attrs->get_optional<std::string>(name);
  if (!v) return std::nullopt;
  return *v;
}

std::string required_attr(const pt::ptree& node, const char* element, const char* name) {
  auto v = attr(node, name);
  if (!v) fail(ErrorCode::SchemaError, std::string("<") + element + "> missing attribute '" + name + "'");
  return *v;
}

void check_attrs(const pt::ptree& node, const char* element, std::initializer_list<std::string_view> allowed) {
  auto attrs = node.get_child_optional(kAttr);
  if (!attrs) return;
  for (const auto& [key, _] : *attrs) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorCode::SchemaError, std::string("<") + element + "> has unknown attribute '" + key + "'");
    }
  }
}

std::string checked_name(const std::string& name, const char* what) {
  if (!is_valid_name(name)) fail(ErrorCode::SchemaError, std::string("invalid ") + what + " name '" + name + "'");
  return name;
}

std::uint64_t parse_uint(const std::string& text, const char* field) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::SchemaError, std::string("resources.") + field + " is not a non-negative integer: '" + text + "'");
  }
  return v;
}

std::string schema_digest(const std::string& text, const char* where) {
  try {
    return normalize_digest(text);
  } catch (const Error&) {
    fail(ErrorCode::SchemaError, std::string(where) + " digest is not sha256:<64 hex>: '" + text + "'");
  }
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename Fn>
void for_each_element(const pt::ptree& section, const char* section_name, const char* element, Fn fn) {
  for (const auto& [key, child] : section) {
    if (key == kAttr) fail(ErrorCode::SchemaError, std::string("<") + section_name + "> takes no attributes");
    if (key != element) {
      fail(ErrorCode::SchemaError, std::string("<") + section_name + "> may only contain <" + element + ">, got <" + key + ">");
    }
    fn(child);
  }
}

void check_placeholder_closure(const ToolDescriptor& d) {
  for (const auto& p : parse_placeholders(d.command_template)) {
    bool declared = false;
    switch (p.kind) {
      case Placeholder::Kind::Input: declared = d.find_input(p.name) != nullptr; break;
      case Placeholder::Kind::Param: declared = d.find_param(p.name) != nullptr; break;
      case Placeholder::Kind::Output: declared = d.has_output(p.name); break;
    }
    if (!declared) {
      fail(ErrorCode::PlaceholderError,
           "command references '" + d.command_template.substr(p.begin, p.end - p.begin) + "' which is not declared");
    }
  }
}

std::string xml_escape(std::string_view s, bool attribute) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) {
          out += "&quot;";
          break;
        }
        [[fallthrough]];
      default: out += c;
    }
  }
  return out;
}

std::string descriptor_filename(const std::string& id, const std::string& version) { return id + "__" + version + ".xml"; }

}  // namespace

ToolDescriptor parse_descriptor(std::string_view document) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    fail(ErrorCode::ParseError, e.what());
  }
  if (tree.empty()) fail(ErrorCode::ParseError, "document has no root element");
  if (tree.size() != 1 || tree.begin()->first != "tool") {
    fail(ErrorCode::SchemaError, "document must have a single <tool> root element");
  }
  const pt::ptree& tool = tree.begin()->second;
  check_attrs(tool, "tool", {"id", "version"});

  ToolDescriptor d;
  d.tool_id = checked_name(required_attr(tool, "tool", "id"), "tool");
  if (d.tool_id.find("__") != std::string::npos) fail(ErrorCode::SchemaError, "tool id may not contain '__'");
  d.version = checked_name(required_attr(tool, "tool", "version"), "version");

  std::set<std::string> seen;
  for (const auto& [key, child] : tool) {
    if (key == kAttr) continue;
    if (!seen.insert(key).second) fail(ErrorCode::SchemaError, "duplicate <" + key + "> element");
    if (key == "container") {
      check_attrs(child, "container", {"image", "digest"});
      d.container_image = required_attr(child, "container", "image");
      auto digest = attr(child, "digest");
      if (!digest) fail(ErrorCode::SchemaError, "<container> missing digest; images must be pinned");
      d.container_digest = schema_digest(*digest, "container");
    } else if (key == "command") {
      d.command_template = trim(child.data());
      for (unsigned char c : d.command_template) {
        if (c < 0x20 || c > 0x7e) fail(ErrorCode::SchemaError, "<command> must be a single line of printable ASCII");
      }
    } else if (key == "inputs") {
      for_each_element(child, "inputs", "input", [&](const pt::ptree& n) {
        check_attrs(n, "input", {"name", "kind"});
        DeclaredInput in{checked_name(required_attr(n, "input", "name"), "input"), std::nullopt};
        if (auto k = attr(n, "kind")) {
          try {
            in.kind = data_kind_from_string(*k);
          } catch (const Error&) {
            fail(ErrorCode::SchemaError, "input '" + in.name + "' has unknown kind '" + *k + "'");
          }
        }
        d.declared_inputs.push_back(std::move(in));
      });
    } else if (key == "params") {
      for_each_element(child, "params", "param", [&](const pt::ptree& n) {
        check_attrs(n, "param", {"name", "default"});
        d.declared_params.push_back({checked_name(required_attr(n, "param", "name"), "param"), attr(n, "default")});
      });
    } else if (key == "outputs") {
      for_each_element(child, "outputs", "output", [&](const pt::ptree& n) {
        check_attrs(n, "output", {"name"});
        auto name = required_attr(n, "output", "name");
        if (!is_safe_relative_path(name)) fail(ErrorCode::SchemaError, "output '" + name + "' is not a safe relative path");
        d.declared_outputs.push_back(name);
      });
    } else if (key == "resources") {
      check_attrs(child, "resources", {"cpus", "mem_mb", "gpus", "walltime_s"});
      d.default_resources.cpus = static_cast<std::uint32_t>(parse_uint(required_attr(child, "resources", "cpus"), "cpus"));
      d.default_resources.mem_mb = parse_uint(required_attr(child, "resources", "mem_mb"), "mem_mb");
      d.default_resources.gpus = static_cast<std::uint32_t>(parse_uint(attr(child, "gpus").value_or("0"), "gpus"));
      d.default_resources.walltime_s = parse_uint(required_attr(child, "resources", "walltime_s"), "walltime_s");
      try {
        d.default_resources.validate();
      } catch (const Error& e) {
        fail(ErrorCode::SchemaError, e.detail());
      }
    } else if (key == "bundles") {
      for_each_element(child, "bundles", "bundle", [&](const pt::ptree& n) {
        check_attrs(n, "bundle", {"digest"});
        d.reference_bundles.push_back(schema_digest(required_attr(n, "bundle", "digest"), "bundle"));
      });
    } else {
      fail(ErrorCode::SchemaError, "unknown element <" + key + "> in <tool>");
    }
  }
  if (!seen.contains("container")) fail(ErrorCode::SchemaError, "missing <container> (container digest is mandatory)");
  if (!seen.contains("command")) fail(ErrorCode::SchemaError, "missing <command>");
  if (!seen.contains("resources")) fail(ErrorCode::SchemaError, "missing <resources>");

  std::set<std::string> names;
  auto unique = [&](const std::string& n, const char* what) {
    if (!names.insert(std::string(what) + ":" + n).second) fail(ErrorCode::SchemaError, std::string("duplicate ") + what + " '" + n + "'");
  };
  for (const auto& i : d.declared_inputs) unique(i.name, "input");
  for (const auto& p : d.declared_params) unique(p.name, "param");
  for (const auto& o : d.declared_outputs) unique(o, "output");

  check_placeholder_closure(d);
  return d;
}

std::string serialize_descriptor(const ToolDescriptor& d) {
  std::ostringstream out;
  out << "<tool id=\"" << xml_escape(d.tool_id, true) << "\" version=\"" << xml_escape(d.version, true) << "\">\n";
  out << "  <container image=\"" << xml_escape(d.container_image, true) << "\" digest=\"sha256:" << d.container_digest
      << "\"/>\n";
  out << "  <command>" << xml_escape(d.command_template, false) << "</command>\n";
  if (!d.declared_inputs.empty()) {
    out << "  <inputs>\n";
    for (const auto& i : d.declared_inputs) {
      out << "    <input name=\"" << xml_escape(i.name, true) << "\"";
      if (i.kind) out << " kind=\"" << to_string(*i.kind) << "\"";
      out << "/>\n";
    }
    out << "  </inputs>\n";
  }
  if (!d.declared_params.empty()) {
    out << "  <params>\n";
    for (const auto& p : d.declared_params) {
      out << "    <param name=\"" << xml_escape(p.name, true) << "\"";
      if (p.default_value) out << " default=\"" << xml_escape(*p.default_value, true) << "\"";
      out << "/>\n";
    }
    out << "  </params>\n";
  }
  if (!d.declared_outputs.empty()) {
    out << "  <outputs>\n";
    for (const auto& o : d.declared_outputs) out << "    <output name=\"" << xml_escape(o, true) << "\"/>\n";
    out << "  </outputs>\n";
  }
  const auto& r = d.default_resources;
  out << "  <resources cpus=\"" << r.cpus << "\" mem_mb=\"" << r.mem_mb << "\" gpus=\"" << r.gpus << "\" walltime_s=\""
      << r.walltime_s << "\"/>\n";
  if (!d.reference_bundles.empty()) {
    out << "  <bundles>\n";
    for (const auto& b : d.reference_bundles) out << "    <bundle digest=\"sha256:" << b << "\"/>\n";
    out << "  </bundles>\n";
  }
  out << "</tool>\n";
  return out.str();
}

int compare_versions(std::string_view a, std::string_view b) {
  auto split = [](std::string_view s) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      std::size_t dot = s.find('.', start);
      parts.push_back(s.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
      if (dot == std::string_view::npos) break;
      start = dot + 1;
    }
    return parts;
  };
  auto is_digits = [](std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  auto strip_zeros = [](std::string_view s) {
    while (s.size() > 1 && s.front() == '0') s.remove_prefix(1);
    return s;
  };
  auto sign = [](int c) { return c < 0 ? -1 : (c > 0 ? 1 : 0); };

  auto pa = split(a);
  auto pb = split(b);
  for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) {
    int c = 0;
    if (is_digits(pa[i]) && is_digits(pb[i])) {
      auto na = strip_zeros(pa[i]);
      auto nb = strip_zeros(pb[i]);
      c = na.size() != nb.size() ? (na.size() < nb.size() ? -1 : 1) : sign(na.compare(nb));
    } else {
      c = sign(pa[i].compare(pb[i]));
    }
    if (c != 0) return c;
  }
  if (pa.size() != pb.size()) return pa.size() < pb.size() ? -1 : 1;
  return sign(a.compare(b));
}

ToolRegistry::ToolRegistry(const Clock* clock) : clock_(clock) {}

ToolRegistry::ToolRegistry(ToolRegistry&& other) noexcept
    : clock_(other.clock_), dir_(std::move(other.dir_)), entries_(std::move(other.entries_)), log_(std::move(other.log_)) {}

ToolRegistry ToolRegistry::open(const std::filesystem::path& dir, const Clock* clock) {
  namespace fs = std::filesystem;
  ToolRegistry reg(clock);
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    ToolDescriptor d = parse_descriptor(buf.str());
    if (path.filename() != descriptor_filename(d.tool_id, d.version)) {
      fail(ErrorCode::SchemaError, "registry file " + path.filename().string() + " does not match its tool id/version");
    }
    reg.install(d);
  }
  reg.dir_ = dir;
  return reg;
}

void ToolRegistry::install(const ToolDescriptor& descriptor) {
  std::unique_lock lock(mutex_);
  auto& versions = entries_[descriptor.tool_id];
  auto it = versions.find(descriptor.version);
  if (it != versions.end()) {
    if (sha256_hex(serialize_descriptor(it->second)) == sha256_hex(serialize_descriptor(descriptor))) return;
    fail(ErrorCode::DuplicateVersion,
         descriptor.tool_id + " " + descriptor.version + " is already installed with different content");
  }
  if (dir_) {
    auto target = *dir_ / descriptor_filename(descriptor.tool_id, descriptor.version);
    auto tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << serialize_descriptor(descriptor);
      if (!out) fail(ErrorCode::Persistence, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
  }
  versions.emplace(descriptor.version, descriptor);
  log_.push_back({clock_ ? clock_->now() : SystemClock().now(), descriptor.tool_id, descriptor.version});
}

ToolDescriptor ToolRegistry::resolve(const std::string& tool_id, const std::optional<std::string>& version) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(tool_id);
  if (it == entries_.end() || it->second.empty()) fail(ErrorCode::UnknownTool, "no tool '" + tool_id + "'");
  if (!version) return it->second.rbegin()->second;
  auto v = it->second.find(*version);
  if (v == it->second.end()) fail(ErrorCode::UnknownTool, "no version '" + *version + "' of tool '" + tool_id + "'");
  return v->second;
}

bool ToolRegistry::contains(const std::string& tool_id, const std::string& version) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(tool_id);
  return it != entries_.end() && it->second.contains(version);
}

std::vector<std::pair<std::string, std::string>> ToolRegistry::list() const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [id, versions] : entries_) {
    for (const auto& [v, _] : versions) out.emplace_back(id, v);
  }
  return out;
}

std::vector<InstallLogEntry> ToolRegistry::install_log() const {
  std::shared_lock lock(mutex_);
  return log_;
}

}  // namespace crossbound
