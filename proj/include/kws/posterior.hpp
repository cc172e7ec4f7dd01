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

// Posterior tensors, keyword specs and decoder configuration.
//
// Tensors are stored linear-domain float32, row-major:
//   transducer  T x (U+1) x V   lattice row u in [0, U]
//   duration    T x (D_max+1)   distribution over durations {0..D_max}
//   ctc         T x V
// Decoders convert to log-domain on the fly.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kws/common.hpp"

namespace kws {

inline constexpr double kRowSumTolerance = 1e-4;

struct PosteriorBundle {
  std::string utterance_id;
  std::uint32_t num_frames = 0;
  std::uint32_t keyword_rows = 0;  // U + 1
  std::uint32_t vocab_size = 0;
  std::uint32_t duration_size = 0;  // D_max + 1, or 0 when absent
  bool tdt = false;
  std::uint32_t ctc_blank_id = 0;
  std::uint32_t transducer_blank_id = 0;
  float frame_hop_seconds = 0.03f;

  std::vector<float> transducer;
  std::vector<float> duration;
  std::vector<float> ctc;

  bool has_transducer() const { return !transducer.empty(); }
  bool has_duration() const { return !duration.empty(); }
  bool has_ctc() const { return !ctc.empty(); }

  std::uint32_t keyword_length() const { return keyword_rows - 1; }
  std::uint32_t max_duration() const {
    return duration_size == 0 ? 0 : duration_size - 1;
  }
  double duration_seconds() const {
    return static_cast<double>(num_frames) * frame_hop_seconds;
  }

  std::size_t transducer_frame_size() const {
    return static_cast<std::size_t>(keyword_rows) * vocab_size;
  }

  std::span<const float> transducer_frame(std::size_t t) const {
    return {transducer.data() + t * transducer_frame_size(),
            transducer_frame_size()};
  }
  std::span<const float> transducer_row(std::size_t t, std::size_t u) const {
    return transducer_frame(t).subspan(u * vocab_size, vocab_size);
  }
  std::span<const float> duration_row(std::size_t t) const {
    return {duration.data() + t * duration_size, duration_size};
  }
  std::span<const float> ctc_row(std::size_t t) const {
    return {ctc.data() + t * vocab_size, vocab_size};
  }
};

struct KeywordSpec {
  std::string keyword_id;
  std::vector<std::uint32_t> tokens;
  std::uint32_t ctc_blank_id = 0;
  std::uint32_t transducer_blank_id = 0;

  std::uint32_t length() const {
    return static_cast<std::uint32_t>(tokens.size());
  }
};

/// Throws kInvalidKeyword unless 1 <= U, tokens < vocab and blanks are not
/// keyword tokens.
inline void check_keyword(const KeywordSpec& kw, std::uint32_t vocab_size) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kInvalidKeyword, "keyword '" + kw.keyword_id + "': " + why);
  };
  if (kw.tokens.empty()) fail("empty token sequence");
  if (kw.ctc_blank_id >= vocab_size) fail("ctc blank id out of vocabulary");
  if (kw.transducer_blank_id >= vocab_size) fail("transducer blank id out of vocabulary");
  for (auto tok : kw.tokens) {
    if (tok >= vocab_size) fail("token id " + std::to_string(tok) + " >= V");
    if (tok == kw.ctc_blank_id || tok == kw.transducer_blank_id) {
      fail("token id " + std::to_string(tok) + " is a blank id");
    }
  }
}

// ---------------------------------------------------------------------------
// Decoder configuration

enum class TransducerMode { kRnnt, kTdt };
enum class CtcMode { kFsd, kPsd };
enum class FusionStrategy { kCtcDom, kTransducerDom, kEquivalenceDom, kCdcZero, kCdcLast };
enum class Heads { kJoint, kTransducerOnly, kCtcOnly };

inline const char* to_string(TransducerMode m) {
  return m == TransducerMode::kRnnt ? "rnnt" : "tdt";
}
inline const char* to_string(CtcMode m) { return m == CtcMode::kFsd ? "fsd" : "psd"; }
inline const char* to_string(Heads h) {
  switch (h) {
    case Heads::kJoint: return "joint";
    case Heads::kTransducerOnly: return "transducer";
    case Heads::kCtcOnly: return "ctc";
  }
  return "?";
}
inline const char* to_string(FusionStrategy f) {
  switch (f) {
    case FusionStrategy::kCtcDom: return "ctc-dom";
    case FusionStrategy::kTransducerDom: return "transducer-dom";
    case FusionStrategy::kEquivalenceDom: return "equivalence-dom";
    case FusionStrategy::kCdcZero: return "cdc-zero";
    case FusionStrategy::kCdcLast: return "cdc-last";
  }
  return "?";
}

inline std::optional<FusionStrategy> parse_fusion(const std::string& s) {
  for (auto f : {FusionStrategy::kCtcDom, FusionStrategy::kTransducerDom,
                 FusionStrategy::kEquivalenceDom, FusionStrategy::kCdcZero,
                 FusionStrategy::kCdcLast}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

inline constexpr FusionStrategy kAllFusionStrategies[] = {
    FusionStrategy::kCtcDom, FusionStrategy::kTransducerDom,
    FusionStrategy::kEquivalenceDom, FusionStrategy::kCdcZero,
    FusionStrategy::kCdcLast};

struct DecodeConfig {
  double bonus = 1.0;
  std::uint32_t timeout = 200;                // frames
  std::optional<double> psd_threshold;        // lambda_phi, required for PSD
  std::uint32_t tdt_max_duration = 4;
  TransducerMode transducer_mode = TransducerMode::kRnnt;
  CtcMode ctc_mode = CtcMode::kFsd;
  FusionStrategy fusion = FusionStrategy::kCdcLast;
  std::uint32_t cdc_window = 20;
  Heads heads = Heads::kJoint;

  bool uses_transducer() const { return heads != Heads::kCtcOnly; }
  bool uses_ctc() const { return heads != Heads::kTransducerOnly; }

  /// Frame-synchronous joint baseline: RNN-T + CTC-FSD, CDC-Last.
  static DecodeConfig mfs() { return DecodeConfig{}; }

  /// Frame-asynchronous joint decoding: TDT + CTC-PSD, CDC-Last.
  static DecodeConfig mfa(double lambda_phi = 0.9993, std::uint32_t max_duration = 4) {
    DecodeConfig cfg;
    cfg.transducer_mode = TransducerMode::kTdt;
    cfg.ctc_mode = CtcMode::kPsd;
    cfg.psd_threshold = lambda_phi;
    cfg.tdt_max_duration = max_duration;
    return cfg;
  }

  bool is_frame_synchronous() const {
    return transducer_mode == TransducerMode::kRnnt && ctc_mode == CtcMode::kFsd;
  }

  /// Throws kInconsistentConfig on any out-of-domain field.
  void check() const {
    auto fail = [](const std::string& why) {
      throw Error(ErrorCode::kInconsistentConfig, why);
    };
    if (!(bonus > 0.0) || !std::isfinite(bonus)) fail("bonus must be positive");
    if (timeout < 1) fail("timeout must be >= 1 frame");
    if (cdc_window < 1) fail("cdc window must be >= 1");
    if (tdt_max_duration < 1) fail("tdt max duration must be >= 1");
    if (ctc_mode == CtcMode::kPsd) {
      if (!psd_threshold) fail("PSD requires lambda_phi");
    }
    if (psd_threshold && !(*psd_threshold > 0.0 && *psd_threshold <= 1.0)) {
      fail("lambda_phi must lie in (0, 1]");
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os << "heads=" << to_string(heads) << " transducer=" << to_string(transducer_mode)
       << " ctc=" << to_string(ctc_mode) << " fusion=" << to_string(fusion)
       << " bonus=" << bonus << " timeout=" << timeout;
    if (psd_threshold) os << " lambda_phi=" << *psd_threshold;
    if (transducer_mode == TransducerMode::kTdt) os << " max_duration=" << tdt_max_duration;
    os << " cdc_window=" << cdc_window;
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind { kShape, kFlags, kMetadata, kRange, kNormalization };

struct Violation {
  ViolationKind kind;
  std::string tensor;               // "transducer", "duration", "ctc" or "header"
  std::vector<std::size_t> index;   // cell index for kRange, row index for kNormalization
  double observed = 0.0;
  std::string message;
};

namespace detail {

inline std::string index_string(const std::vector<std::size_t>& idx) {
  std::string s = "(";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(idx[i]);
  }
  return s + ")";
}

// Checks one tensor whose rows are contiguous runs of `row_len` floats.
// `row_shape` maps a flat row number to its multi-index (without the last axis).
template <typename RowShape>
void check_stochastic_rows(const std::vector<float>& data, std::size_t row_len,
                           const std::string& name, RowShape row_shape,
                           std::vector<Violation>& out) {
  if (data.empty() || row_len == 0) return;
  const std::size_t rows = data.size() / row_len;
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    bool row_ok = true;
    for (std::size_t k = 0; k < row_len; ++k) {
      const double p = data[r * row_len + k];
      if (!(p >= 0.0 && p <= 1.0)) {
        auto idx = row_shape(r);
        idx.push_back(k);
        std::ostringstream os;
        os << name << index_string(idx) << " = " << p << " outside [0,1]";
        out.push_back({ViolationKind::kRange, name, idx, p, os.str()});
        row_ok = false;
      }
      sum += p;
    }
    if (row_ok && std::fabs(sum - 1.0) > kRowSumTolerance) {
      auto idx = row_shape(r);
      std::ostringstream os;
      os << name << " row " << index_string(idx) << " sums to " << sum
         << " (tolerance " << kRowSumTolerance << ")";
      out.push_back({ViolationKind::kNormalization, name, idx, sum, os.str()});
    }
  }
}

}  // namespace detail

/// Returns every invariant violation; an empty list means the bundle is valid.
/// A row that already has out-of-range cells is not reported again for its sum.
inline std::vector<Violation> validate(const PosteriorBundle& b) {
  std::vector<Violation> out;
  auto header = [&](ViolationKind kind, const std::string& msg, double observed = 0.0) {
    out.push_back({kind, "header", {}, observed, msg});
  };

  if (b.num_frames == 0) header(ViolationKind::kShape, "num_frames must be positive");
  if (b.keyword_rows < 2) {
    header(ViolationKind::kShape, "keyword_rows must be >= 2 (U >= 1)", b.keyword_rows);
  }
  if (b.vocab_size == 0) header(ViolationKind::kShape, "vocab_size must be positive");
  if (!(b.frame_hop_seconds > 0.0f) || !std::isfinite(b.frame_hop_seconds)) {
    header(ViolationKind::kMetadata, "frame_hop_seconds must be positive",
           b.frame_hop_seconds);
  }
  if (b.vocab_size > 0) {
    if (b.ctc_blank_id >= b.vocab_size) {
      header(ViolationKind::kMetadata, "ctc_blank_id >= vocab_size", b.ctc_blank_id);
    }
    if (b.transducer_blank_id >= b.vocab_size) {
      header(ViolationKind::kMetadata, "transducer_blank_id >= vocab_size",
             b.transducer_blank_id);
    }
  }
  if (b.tdt && !b.has_duration()) {
    header(ViolationKind::kFlags, "bundle flagged TDT but has no duration matrix");
  }
  if (!b.tdt && b.has_duration()) {
    header(ViolationKind::kFlags, "duration matrix present on a non-TDT bundle");
  }
  if (b.has_duration() && b.duration_size < 2) {
    header(ViolationKind::kShape, "duration rows need D_max >= 1", b.duration_size);
  }
  if (!b.has_transducer() && !b.has_ctc()) {
    header(ViolationKind::kShape, "bundle carries neither a transducer nor a ctc tensor");
  }
  if (!out.empty()) return out;

  const std::size_t T = b.num_frames;
  const std::size_t rows = b.keyword_rows;
  const std::size_t V = b.vocab_size;

  auto size_check = [&](const std::vector<float>& data, std::size_t expect,
                        const std::string& name) {
    if (data.empty() || data.size() == expect) return true;
    out.push_back({ViolationKind::kShape, name, {}, static_cast<double>(data.size()),
                   name + " holds " + std::to_string(data.size()) + " values, expected " +
                       std::to_string(expect)});
    return false;
  };

  if (size_check(b.transducer, T * rows * V, "transducer")) {
    detail::check_stochastic_rows(
        b.transducer, V, "transducer",
        [&](std::size_t r) { return std::vector<std::size_t>{r / rows, r % rows}; }, out);
  }
  if (size_check(b.duration, T * b.duration_size, "duration")) {
    detail::check_stochastic_rows(
        b.duration, b.duration_size, "duration",
        [](std::size_t r) { return std::vector<std::size_t>{r}; }, out);
  }
  if (size_check(b.ctc, T * V, "ctc")) {
    detail::check_stochastic_rows(
        b.ctc, V, "ctc", [](std::size_t r) { return std::vector<std::size_t>{r}; }, out);
  }
  return out;
}

/// Throws the most specific error for the first violation, if any.
inline void require_valid(const PosteriorBundle& b) {
  auto violations = validate(b);
  if (violations.empty()) return;
  const auto& v = violations.front();
  ErrorCode code = ErrorCode::kInvalidBundle;
  switch (v.kind) {
    case ViolationKind::kRange: code = ErrorCode::kProbabilityOutOfRange; break;
    case ViolationKind::kNormalization: code = ErrorCode::kNonStochasticRow; break;
    case ViolationKind::kFlags:
      if (b.tdt && !b.has_duration()) code = ErrorCode::kMissingDurationForTDT;
      break;
    default: break;
  }
  std::string msg = v.message;
  if (violations.size() > 1) {
    msg += " (+" + std::to_string(violations.size() - 1) + " more)";
  }
  throw Error(code, msg);
}

}  // namespace kws
