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

#include <stdexcept>
#include <string>
#include <string_view>

namespace crossbound {

enum class ErrorCode {
  // core-model
  UnknownTool,
  MissingInput,
  UnboundPlaceholder,
  BadPath,
  BadParameter,
  BadDigest,
  DuplicateInput,
  WrongState,
  // tool-registry
  ParseError,
  SchemaError,
  PlaceholderError,
  DuplicateVersion,
  // cluster-registry
  NoEligibleCluster,
  QuotaExceeded,
  ConcurrencyLimit,
  AccountExpired,
  UnknownReservation,
  UnknownCluster,
  UnknownAccount,
  DuplicateCluster,
  DuplicateAccount,
  // transport
  AuthModeMismatch,
  CredentialExpired,
  Unreachable,
  SessionClosed,
  RemoteIOError,
  NotFound,
  // staging
  DigestMismatch,
  EndpointUnreachable,
  MissingOutput,
  ArtifactMissing,
  // batchgen
  LayoutIncomplete,
  MalformedDirective,
  // lifecycle / simcluster
  UnknownJob,
  AlreadyTerminal,
  CorruptStore,
  Persistence,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Domain error carrying a machine-readable code. The message always starts
/// with the code name so it can be surfaced verbatim in failure reasons.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

}  // namespace crossbound
