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

#include <ostream>
#include <string>
#include <vector>

namespace crossbound {

/// Runs one CLI invocation; `args` excludes the program name. Returns 0 on
/// success, 1 on a domain error and 2 on a usage error. Data goes to `out`,
/// diagnostics to `err`.
///
/// The state directory is `--state-dir`, else $CROSSBOUND_STATE_DIR, else
/// ./state.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crossbound
