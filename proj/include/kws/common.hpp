// Copyright 2026 The kwstream Authors.
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kws {

enum class ErrorCode {
  kMagicMismatch,
  kUnsupportedVersion,
  kTruncatedTensor,
  kNonStochasticRow,
  kProbabilityOutOfRange,
  kMissingDurationForTDT,
  kInvalidBundle,
  kIoFailure,
  kDurationMissing,
  kFrameShapeMismatch,
  kLengthMismatch,
  kInconsistentConfig,
  kMissingTensorForConfig,
  kInvalidKeyword,
  kEmptyCorpus,
  kEmptyMap,
  kMissingTruth,
  kOverlappingPlants,
  kInvalidSynthSpec,
  kInstanceTooLarge,
  kParseError,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMagicMismatch: return "MagicMismatch";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedTensor: return "TruncatedTensor";
    case ErrorCode::kNonStochasticRow: return "NonStochasticRow";
    case ErrorCode::kProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::kMissingDurationForTDT: return "MissingDurationForTDT";
    case ErrorCode::kInvalidBundle: return "InvalidBundle";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kDurationMissing: return "DurationMissing";
    case ErrorCode::kFrameShapeMismatch: return "FrameShapeMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInconsistentConfig: return "InconsistentConfig";
    case ErrorCode::kMissingTensorForConfig: return "MissingTensorForConfig";
    case ErrorCode::kInvalidKeyword: return "InvalidKeyword";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyMap: return "EmptyMap";
    case ErrorCode::kMissingTruth: return "MissingTruth";
    case ErrorCode::kOverlappingPlants: return "OverlappingPlants";
    case ErrorCode::kInvalidSynthSpec: return "InvalidSynthSpec";
    case ErrorCode::kInstanceTooLarge: return "InstanceTooLarge";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

/// One entry of a score stream: either a confidence in [0,1] or the
/// placeholder PH emitted for frames a branch did not process.
class FrameScore {
 public:
  constexpr FrameScore() = default;

  static constexpr FrameScore placeholder() { return FrameScore(); }
  static constexpr FrameScore of(double value) { return FrameScore(value); }

  constexpr bool is_placeholder() const { return placeholder_; }
  constexpr bool has_value() const { return !placeholder_; }

  /// Only meaningful when has_value().
  constexpr double value() const { return value_; }

  /// Single-branch numeric rendering: PH reads as 0.
  constexpr double numeric() const { return placeholder_ ? 0.0 : value_; }

  friend constexpr bool operator==(const FrameScore& a, const FrameScore& b) {
    if (a.placeholder_ || b.placeholder_) return a.placeholder_ == b.placeholder_;
    return a.value_ == b.value_;
  }

 private:
  constexpr explicit FrameScore(double v) : value_(v), placeholder_(false) {}

  double value_ = 0.0;
  bool placeholder_ = true;
};

struct ScoreStream {
  std::string utterance_id;
  std::vector<FrameScore> frames;

  std::size_t size() const { return frames.size(); }

  std::size_t placeholder_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.is_placeholder() ? 1 : 0;
    return n;
  }

  std::vector<double> numeric() const {
    std::vector<double> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.numeric());
    return out;
  }
};

/// |a-b| / max(|a|,|b|), with 0 when both are zero.
inline double relative_difference(double a, double b) {
  double scale = std::max(std::fabs(a), std::fabs(b));
  if (scale == 0.0) return 0.0;
  return std::fabs(a - b) / scale;
}

}  // namespace kws
