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

#include "crossbound/error.hpp"

namespace crossbound {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::BadPath: return "BadPath";
    case ErrorCode::BadParameter: return "BadParameter";
    case ErrorCode::BadDigest: return "BadDigest";
    case ErrorCode::DuplicateInput: return "DuplicateInput";
    case ErrorCode::WrongState: return "WrongState";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::PlaceholderError: return "PlaceholderError";
    case ErrorCode::DuplicateVersion: return "DuplicateVersion";
    case ErrorCode::NoEligibleCluster: return "NoEligibleCluster";
    case ErrorCode::QuotaExceeded: return "QuotaExceeded";
    case ErrorCode::ConcurrencyLimit: return "ConcurrencyLimit";
    case ErrorCode::AccountExpired: return "AccountExpired";
    case ErrorCode::UnknownReservation: return "UnknownReservation";
    case ErrorCode::UnknownCluster: return "UnknownCluster";
    case ErrorCode::UnknownAccount: return "UnknownAccount";
    case ErrorCode::DuplicateCluster: return "DuplicateCluster";
    case ErrorCode::DuplicateAccount: return "DuplicateAccount";
    case ErrorCode::AuthModeMismatch: return "AuthModeMismatch";
    case ErrorCode::CredentialExpired: return "CredentialExpired";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::RemoteIOError: return "RemoteIOError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::MissingOutput: return "MissingOutput";
    case ErrorCode::ArtifactMissing: return "ArtifactMissing";
    case ErrorCode::LayoutIncomplete: return "LayoutIncomplete";
    case ErrorCode::MalformedDirective: return "MalformedDirective";
    case ErrorCode::UnknownJob: return "UnknownJob";
    case ErrorCode::AlreadyTerminal: return "AlreadyTerminal";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::Persistence: return "Persistence";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace crossbound
