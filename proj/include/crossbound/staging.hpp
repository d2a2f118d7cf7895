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
#include <mutex>
#include <string>
#include <vector>

#include "crossbound/cluster_registry.hpp"
#include "crossbound/job_record.hpp"
#include "crossbound/layout.hpp"
#include "crossbound/transport.hpp"
#include "crossbound/validate.hpp"

namespace crossbound {

struct ObjectStoreEndpoint {
  enum class Access { Public, Private };
  std::string endpoint_id;
  std::string base_url;
  Access access = Access::Public;
  std::string credential_ref;  // only for Private
};

Json to_json(const ObjectStoreEndpoint& e);
ObjectStoreEndpoint endpoint_from_json(const Json& j);

/// Broker-side content-addressed store for container images and reference
/// bundles, one file per digest.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path dir);

  std::string put(std::string_view bytes);
  std::string import_file(const std::filesystem::path& file);
  bool contains(const std::string& digest) const;
  /// ArtifactMissing if absent, DigestMismatch if the stored bytes rotted.
  std::string read(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
};

/// One mutex per (cluster, digest) so concurrent stagings of a shared bundle
/// transfer it once.
class BundleLocks {
 public:
  std::mutex& lock_for(const std::string& cluster_id, const std::string& digest);

 private:
  std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::unique_ptr<std::mutex>> locks_;
};

struct StagingContext {
  const ClusterProfile& profile;
  const ArtifactStore& artifacts;
  const std::map<std::string, ObjectStoreEndpoint>& endpoints;
  BundleLocks* locks = nullptr;
};

std::string work_dir_for(const ClusterProfile& profile, const std::string& job_id);
std::string bundle_cache_path(const ClusterProfile& profile, const std::string& digest);

/// Creates the work dir, makes sure the container image and every reference
/// bundle sit in the cluster's digest-keyed cache (uploading only on a miss),
/// uploads INLINE inputs and has the target fetch OBJECT_STORE inputs itself.
StagedLayout stage_job(const ValidatedJob& job, TransportSession& session, const StagingContext& context);

struct FetchedOutput {
  std::string name;
  std::string bytes;
  std::string digest;
};

/// Retrieves every output the job declares; MissingOutput names the first
/// absent file. Extra files in the work dir are ignored.
std::vector<FetchedOutput> fetch_outputs(const ValidatedJob& job, const StagedLayout& layout, TransportSession& session);

/// Removes the work dir, never the bundle cache. Allowed once outputs are
/// fetched or the job failed or was cancelled; WrongState before that.
void gc_workdir(const StagedLayout& layout, JobState state, TransportSession& session);

}  // namespace crossbound
