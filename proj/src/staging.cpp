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

#include "crossbound/staging.hpp"

#include <fstream>
#include <sstream>

#include "crossbound/digest.hpp"
#include "crossbound/error.hpp"

namespace crossbound {
namespace fs = std::filesystem;
using namespace json_detail;

Json to_json(const ObjectStoreEndpoint& e) {
  Json j{{"endpoint_id", e.endpoint_id},
         {"base_url", e.base_url},
         {"access", e.access == ObjectStoreEndpoint::Access::Public ? "PUBLIC" : "PRIVATE"}};
  if (e.access == ObjectStoreEndpoint::Access::Private) j["credential_ref"] = e.credential_ref;
  return j;
}

ObjectStoreEndpoint endpoint_from_json(const Json& j) {
  expect_keys(j, "endpoint", {"endpoint_id", "base_url", "access", "credential_ref"});
  ObjectStoreEndpoint e;
  e.endpoint_id = get_string(j, "endpoint", "endpoint_id");
  e.base_url = get_string(j, "endpoint", "base_url");
  std::string access = get_string_or(j, "endpoint", "access", "PUBLIC");
  if (access == "PUBLIC") {
    e.access = ObjectStoreEndpoint::Access::Public;
  } else if (access == "PRIVATE") {
    e.access = ObjectStoreEndpoint::Access::Private;
    e.credential_ref = get_string(j, "endpoint", "credential_ref");
  } else {
    fail(ErrorCode::InvalidArgument, "endpoint access must be PUBLIC or PRIVATE");
  }
  return e;
}

ArtifactStore::ArtifactStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ArtifactStore::put(std::string_view bytes) {
  std::string digest = sha256_hex(bytes);
  fs::path target = dir_ / digest;
  if (fs::exists(target)) return digest;
  fs::path tmp = target;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Persistence, "cannot write artifact " + digest);
  }
  fs::rename(tmp, target);
  return digest;
}

std::string ArtifactStore::import_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return put(buf.str());
}

bool ArtifactStore::contains(const std::string& digest) const { return is_valid_digest(digest) && fs::exists(dir_ / digest); }

std::string ArtifactStore::read(const std::string& digest) const {
  if (!contains(digest)) fail(ErrorCode::ArtifactMissing, "artifact store has no " + digest);
  std::ifstream in(dir_ / digest, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = std::move(buf).str();
  if (sha256_hex(bytes) != digest) fail(ErrorCode::DigestMismatch, "stored artifact " + digest + " is corrupt");
  return bytes;
}

std::mutex& BundleLocks::lock_for(const std::string& cluster_id, const std::string& digest) {
  std::lock_guard lock(mutex_);
  auto& slot = locks_[{cluster_id, digest}];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::string work_dir_for(const ClusterProfile& profile, const std::string& job_id) {
  return profile.scratch_root + "/" + job_id;
}

std::string bundle_cache_path(const ClusterProfile& profile, const std::string& digest) {
  return profile.scratch_root + "/.bundles/" + digest + "/data";
}

namespace {

void run_checked(TransportSession& session, const std::string& command) {
  auto r = session.exec_command(command);
  if (r.exit_code != 0) fail(ErrorCode::RemoteIOError, "'" + command + "' failed: " + r.err);
}

std::optional<std::string> remote_digest(TransportSession& session, const std::string& path) {
  auto r = session.exec_command("sha256 " + path);
  if (r.exit_code != 0) return std::nullopt;
  auto argv = split_command(r.out);
  if (argv.empty() || !is_valid_digest(argv[0])) return std::nullopt;
  return argv[0];
}

std::string ensure_cached(const std::string& digest, TransportSession& session, const StagingContext& ctx) {
  std::string path = bundle_cache_path(ctx.profile, digest);
  std::unique_lock<std::mutex> guard;
  if (ctx.locks != nullptr) guard = std::unique_lock(ctx.locks->lock_for(ctx.profile.cluster_id, digest));
  if (remote_digest(session, path) == digest) return path;
  std::string bytes = ctx.artifacts.read(digest);
  std::string got = session.put_file(bytes, path);
  if (got != digest) fail(ErrorCode::DigestMismatch, "cached artifact " + digest + " uploaded as " + got);
  return path;
}

std::string read_local(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::NotFound, "cannot read local input " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace

StagedLayout stage_job(const ValidatedJob& job, TransportSession& session, const StagingContext& ctx) {
  StagedLayout layout;
  layout.job_id = job.job_id();
  layout.work_dir = work_dir_for(ctx.profile, job.job_id());
  run_checked(session, "mkdir -p " + layout.work_dir);

  layout.container_path = ensure_cached(job.tool.container_digest, session, ctx);
  layout.bundle_paths[job.tool.container_digest] = layout.container_path;
  for (const auto& digest : job.tool.reference_bundles) layout.bundle_paths[digest] = ensure_cached(digest, session, ctx);

  for (const auto& ref : job.spec.inputs) {
    switch (ref.kind) {
      case DataKind::Inline: {
        std::string bytes = read_local(ref.local_path);
        if (bytes.size() != ref.size_bytes || sha256_hex(bytes) != ref.digest) {
          fail(ErrorCode::DigestMismatch, "input '" + ref.name + "' does not match its declared size/digest");
        }
        std::string dest = layout.work_dir + "/" + ref.name;
        std::string got = session.put_file(bytes, dest);
        if (got != ref.digest) fail(ErrorCode::DigestMismatch, "input '" + ref.name + "' arrived as " + got);
        layout.staged[ref.name] = dest;
        layout.digests[ref.name] = got;
        break;
      }
      case DataKind::ObjectStore: {
        auto ep = ctx.endpoints.find(ref.endpoint_id);
        if (ep == ctx.endpoints.end()) fail(ErrorCode::EndpointUnreachable, "unknown object store '" + ref.endpoint_id + "'");
        std::string dest = layout.work_dir + "/" + ref.name;
        auto r = session.exec_command("fetch-object " + ep->second.base_url + " " + ref.object_key + " " + dest);
        if (r.exit_code == 2) fail(ErrorCode::EndpointUnreachable, ref.endpoint_id + ": " + r.err);
        if (r.exit_code != 0) fail(ErrorCode::RemoteIOError, "fetch of " + ref.object_key + " failed: " + r.err);
        auto digest = remote_digest(session, dest);
        if (!digest) fail(ErrorCode::RemoteIOError, "fetched object " + ref.object_key + " is not readable on target");
        if (!ref.digest.empty() && *digest != ref.digest) {
          fail(ErrorCode::DigestMismatch, "object " + ref.object_key + " hashed to " + *digest + ", expected " + ref.digest);
        }
        layout.staged[ref.name] = dest;
        layout.digests[ref.name] = *digest;
        break;
      }
      case DataKind::ReferenceBundle: {
        std::string path = ensure_cached(ref.digest, session, ctx);
        layout.bundle_paths[ref.digest] = path;
        layout.staged[ref.name] = path;
        layout.digests[ref.name] = ref.digest;
        break;
      }
    }
  }
  return layout;
}

std::vector<FetchedOutput> fetch_outputs(const ValidatedJob& job, const StagedLayout& layout, TransportSession& session) {
  std::vector<FetchedOutput> out;
  for (const auto& name : job.outputs) {
    try {
      auto f = session.get_file(layout.work_dir + "/" + name);
      out.push_back({name, std::move(f.bytes), std::move(f.digest)});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound) fail(ErrorCode::MissingOutput, name);
      throw;
    }
  }
  return out;
}

void gc_workdir(const StagedLayout& layout, JobState state, TransportSession& session) {
  if (state != JobState::Fetched && state != JobState::Notified && state != JobState::Failed &&
      state != JobState::Cancelled) {
    fail(ErrorCode::WrongState, "work dir of " + layout.job_id + " kept while job is " + std::string(to_string(state)));
  }
  run_checked(session, "rm -r " + layout.work_dir);
}

}  // namespace crossbound
