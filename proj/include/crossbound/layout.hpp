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
#include <string>
#include <vector>

namespace crossbound {

/// Remote placement of a staged job. All paths are absolute on the target.
struct StagedLayout {
  std::string job_id;
  std::string work_dir;
  std::map<std::string, std::string> staged;        // input name -> remote path
  std::map<std::string, std::string> digests;       // input name -> sha256 of staged bytes
  std::map<std::string, std::string> bundle_paths;  // digest -> remote cache path
  std::string container_path;

  friend bool operator==(const StagedLayout&, const StagedLayout&) = default;
};

}  // namespace crossbound
