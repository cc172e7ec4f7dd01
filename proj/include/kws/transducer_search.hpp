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

// Keyword-specific streaming Viterbi over the Transducer lattice.
//
// Node (t, u) holds the best log score of any path that has emitted the first
// u keyword tokens by frame t. Row 0 is re-seeded with log(1) at every
// processed frame so a keyword may start anywhere. Arcs:
//   vertical    (t, u-1) -> (t, u)   emits y_u,   prob p_{t,u-1}(y_u)
//   horizontal  (t', u)  -> (t, u)   emits blank, prob p_{t',u}(blank)
// where t' is the previously processed frame (t-1 for RNN-T, t-d for TDT).
// The frame score is delta(t,U) * blank(t,U), normalised by the number of
// frames the best path spans.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "kws/common.hpp"
#include "kws/posterior.hpp"

namespace kws {

struct TransducerStep {
  FrameScore score;                 // PH on TDT-skipped frames
  double raw_log_score = kLogZero;  // log(delta(t,U) * blank(t,U)); kLogZero when skipped
  std::uint32_t path_len = 0;       // frames spanned by the best path; 0 when skipped
  std::uint32_t advance = 1;        // frames until the next processed frame
  bool processed = false;
};

/// Index of the largest entry; ties go to the smallest duration.
inline std::uint32_t argmax_duration(std::span<const float> row) {
  std::uint32_t best = 0;
  for (std::uint32_t d = 1; d < row.size(); ++d) {
    if (row[d] > row[best]) best = d;
  }
  return best;
}

/// Shared output rule for both branches: zero past the timeout, otherwise the
/// per-frame geometric mean of (bonus * raw) clamped to [0, 1].
inline double normalise_path_score(double raw_log, std::uint32_t path_len,
                                   std::uint32_t span_frames, const DecodeConfig& cfg) {
  if (span_frames > cfg.timeout) return 0.0;
  if (raw_log == kLogZero || path_len == 0) return 0.0;
  const double v = std::exp((std::log(cfg.bonus) + raw_log) / path_len);
  return std::clamp(v, 0.0, 1.0);
}

class TransducerSearch {
 public:
  TransducerSearch(const KeywordSpec& keyword, const DecodeConfig& cfg,
                   std::uint32_t vocab_size)
      : tokens_(keyword.tokens),
        blank_(keyword.transducer_blank_id),
        vocab_(vocab_size),
        cfg_(cfg) {
    check_keyword(keyword, vocab_size);
    reset();
  }

  void reset() {
    const std::size_t rows = tokens_.size() + 1;
    delta_.assign(rows, kLogZero);
    prev_blank_.assign(rows, kLogZero);
    path_len_.assign(rows, 1);
    next_delta_.assign(rows, kLogZero);
    next_len_.assign(rows, 1);
    cursor_ = 0;
    pending_skip_ = 0;
    gap_ = 1;
    lattice_updates_ = 0;
  }

  /// Consumes frame `cursor()`. `frame` is (U+1) x V; `duration` is the
  /// D_max+1 duration distribution and is required in TDT mode only.
  TransducerStep step(std::span<const float> frame, std::span<const float> duration = {}) {
    const bool tdt = cfg_.transducer_mode == TransducerMode::kTdt;
    if (pending_skip_ > 0) {
      --pending_skip_;
      ++gap_;
      ++cursor_;
      return TransducerStep{FrameScore::placeholder(), kLogZero, 0, 1, false};
    }

    const std::size_t U = tokens_.size();
    if (frame.size() != (U + 1) * vocab_) {
      throw Error(ErrorCode::kFrameShapeMismatch,
                  "transducer frame has " + std::to_string(frame.size()) +
                      " values, expected " + std::to_string((U + 1) * vocab_));
    }
    if (tdt) {
      if (duration.empty()) {
        throw Error(ErrorCode::kDurationMissing,
                    "TDT step at frame " + std::to_string(cursor_) + " without durations");
      }
      if (duration.size() != cfg_.tdt_max_duration + 1) {
        throw Error(ErrorCode::kFrameShapeMismatch,
                    "duration row has " + std::to_string(duration.size()) +
                        " entries, expected D_max+1 = " +
                        std::to_string(cfg_.tdt_max_duration + 1));
      }
    }

    auto prob = [&](std::size_t u, std::uint32_t v) -> double {
      return frame[u * vocab_ + v];
    };

    next_delta_[0] = 0.0;
    next_len_[0] = 1;
    for (std::size_t u = 1; u <= U; ++u) {
      const double vertical = next_delta_[u - 1] + safe_log(prob(u - 1, tokens_[u - 1]));
      const double horizontal = delta_[u] + prev_blank_[u];
      if (vertical >= horizontal) {
        next_delta_[u] = vertical;
        next_len_[u] = next_len_[u - 1];
      } else {
        next_delta_[u] = horizontal;
        next_len_[u] = path_len_[u] + gap_;
      }
    }
    for (std::size_t u = 0; u <= U; ++u) prev_blank_[u] = safe_log(prob(u, blank_));
    delta_.swap(next_delta_);
    path_len_.swap(next_len_);

    TransducerStep out;
    out.processed = true;
    out.raw_log_score = delta_[U] + prev_blank_[U];
    out.path_len = path_len_[U];
    out.score = FrameScore::of(
        normalise_path_score(out.raw_log_score, out.path_len, out.path_len, cfg_));

    std::uint32_t d = 1;
    if (tdt) d = std::max<std::uint32_t>(argmax_duration(duration), 1);
    out.advance = d;
    pending_skip_ = d - 1;
    gap_ = 1;
    ++cursor_;
    ++lattice_updates_;
    return out;
  }

  std::uint32_t cursor() const { return cursor_; }
  std::uint32_t pending_skip() const { return pending_skip_; }
  std::uint64_t lattice_updates() const { return lattice_updates_; }
  const std::vector<double>& delta() const { return delta_; }
  const std::vector<std::uint32_t>& path_lengths() const { return path_len_; }

 private:
  std::vector<std::uint32_t> tokens_;
  std::uint32_t blank_;
  std::uint32_t vocab_;
  DecodeConfig cfg_;

  std::vector<double> delta_;       // log delta at the last processed frame
  std::vector<double> prev_blank_;  // log blank prob at the last processed frame
  std::vector<std::uint32_t> path_len_;
  std::vector<double> next_delta_;
  std::vector<std::uint32_t> next_len_;

  std::uint32_t cursor_ = 0;
  std::uint32_t pending_skip_ = 0;
  std::uint32_t gap_ = 1;  // frames between the last processed frame and the cursor
  std::uint64_t lattice_updates_ = 0;
};

struct TransducerTrace {
  ScoreStream stream;
  std::vector<double> raw;  // linear delta(t,U)*blank(t,U); 0 on skipped frames
  std::vector<std::uint32_t> path_len;
  std::uint64_t lattice_updates = 0;
};

inline void require_transducer_inputs(const PosteriorBundle& bundle,
                                      const KeywordSpec& keyword, const DecodeConfig& cfg) {
  if (!bundle.has_transducer()) {
    throw Error(ErrorCode::kMissingTensorForConfig,
                bundle.utterance_id + ": no transducer tensor");
  }
  if (keyword.length() + 1 != bundle.keyword_rows) {
    throw Error(ErrorCode::kFrameShapeMismatch,
                bundle.utterance_id + ": lattice has " + std::to_string(bundle.keyword_rows) +
                    " rows, keyword '" + keyword.keyword_id + "' needs " +
                    std::to_string(keyword.length() + 1));
  }
  if (cfg.transducer_mode == TransducerMode::kTdt && !bundle.has_duration()) {
    throw Error(ErrorCode::kDurationMissing,
                bundle.utterance_id + ": TDT decoding needs a duration matrix");
  }
}

inline TransducerTrace decode_transducer_trace(const PosteriorBundle& bundle,
                                               const KeywordSpec& keyword,
                                               const DecodeConfig& cfg) {
  require_transducer_inputs(bundle, keyword, cfg);
  const bool tdt = cfg.transducer_mode == TransducerMode::kTdt;
  TransducerSearch search(keyword, cfg, bundle.vocab_size);
  TransducerTrace trace;
  trace.stream.utterance_id = bundle.utterance_id;
  trace.stream.frames.reserve(bundle.num_frames);
  trace.raw.reserve(bundle.num_frames);
  trace.path_len.reserve(bundle.num_frames);
  for (std::size_t t = 0; t < bundle.num_frames; ++t) {
    auto step = search.step(bundle.transducer_frame(t),
                            tdt ? bundle.duration_row(t) : std::span<const float>{});
    trace.stream.frames.push_back(step.score);
    trace.raw.push_back(step.processed ? std::exp(step.raw_log_score) : 0.0);
    trace.path_len.push_back(step.path_len);
  }
  trace.lattice_updates = search.lattice_updates();
  return trace;
}

inline ScoreStream decode_transducer_stream(const PosteriorBundle& bundle,
                                            const KeywordSpec& keyword,
                                            const DecodeConfig& cfg) {
  return decode_transducer_trace(bundle, keyword, cfg).stream;
}

}  // namespace kws
