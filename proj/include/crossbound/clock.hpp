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

#include <atomic>
#include <cstdint>
#include <string>

namespace crossbound {

/// Microseconds since the Unix epoch. Virtual clocks start wherever the
/// caller puts them; nothing assumes wall-clock alignment.
using Timestamp = std::int64_t;

constexpr Timestamp kMicrosPerSecond = 1'000'000;

constexpr Timestamp seconds(std::int64_t s) { return s * kMicrosPerSecond; }
constexpr double to_seconds(Timestamp t) { return static_cast<double>(t) / kMicrosPerSecond; }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
};

/// Explicitly advanced clock shared by the broker and simulated clusters.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Timestamp start = 0) : now_(start) {}

  Timestamp now() const override { return now_.load(std::memory_order_acquire); }

  /// Moves forward to `t`; never moves backwards. Returns the new time.
  Timestamp advance_to(Timestamp t);
  Timestamp advance_by(Timestamp delta) { return advance_to(now() + delta); }

 private:
  std::atomic<Timestamp> now_;
};

/// "YYYY-MM-DDTHH:MM:SSZ", or with ".ffffff" when sub-second digits are non-zero.
std::string format_iso8601(Timestamp t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.f+]Z". Throws Error(InvalidArgument).
Timestamp parse_iso8601(const std::string& text);

}  // namespace crossbound
