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
#include <span>
#include <string>
#include <string_view>

namespace crossbound {

// SHA-256 is the only digest algorithm used anywhere in manifests, caches
// and transfer logs. Digests are carried as 64 lowercase hex characters.

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_file(const std::filesystem::path& path);

bool is_valid_digest(std::string_view digest) noexcept;

/// Accepts either "sha256:<hex>" or bare hex and returns the bare hex.
/// Throws BadDigest if the result is not well-formed.
std::string normalize_digest(std::string_view text);

/// Incremental hasher, used by the keyed hash chain in the simulator.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::string_view bytes);
  std::string hex_digest();

 private:
  void* ctx_;
};

}  // namespace crossbound
