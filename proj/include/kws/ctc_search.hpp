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

// Keyword-specific streaming CTC Viterbi with phone-synchronous decoding.
//
// Topology over 2U+1 states [blank, y1, blank, y2, ..., yU, blank]. A path
// may enter at state 0 or 1 on any processed frame; the frame score is the
// better of the two terminal states. With PSD enabled, frames whose blank
// posterior reaches lambda_phi are skipped outright: the state is frozen,
// the frame does not count toward the normalisation length, but it does
// count toward the timeout span.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kws/common.hpp"
#include "kws/posterior.hpp"
#include "kws/transducer_search.hpp"

namespace kws {

struct CtcTopology {
  std::vector<std::uint32_t> labels;  // 2U+1 entries
  std::vector<bool> skip_allowed;     // state j may be entered from j-2

  static CtcTopology build(const KeywordSpec& keyword) {
    CtcTopology topo;
    const std::size_t U = keyword.tokens.size();
    topo.labels.reserve(2 * U + 1);
    for (std::size_t i = 0; i < U; ++i) {
      topo.labels.push_back(keyword.ctc_blank_id);
      topo.labels.push_back(keyword.tokens[i]);
    }
    topo.labels.push_back(keyword.ctc_blank_id);

    topo.skip_allowed.assign(topo.labels.size(), false);
    for (std::size_t j = 3; j < topo.labels.size(); j += 2) {
      topo.skip_allowed[j] = topo.labels[j] != topo.labels[j - 2];
    }
    return topo;
  }

  std::size_t size() const { return labels.size(); }
};

enum class GateDecision { kKeep, kSkip };

inline GateDecision psd_gate(std::span<const float> frame_posterior, double lambda_phi,
                             std::uint32_t blank) {
  return frame_posterior[blank] >= lambda_phi ? GateDecision::kSkip : GateDecision::kKeep;
}

struct CtcStep {
  FrameScore score;
  double raw_log_score = kLogZero;
  std::uint32_t path_len = 0;  // consumed (non-skipped) frames on the best path
  std::uint32_t span = 0;      // real frames from path start to now, skips included
  bool processed = false;
};

class CtcSearch {
 public:
  CtcSearch(const KeywordSpec& keyword, const DecodeConfig& cfg, std::uint32_t vocab_size)
      : topo_(CtcTopology::build(keyword)),
        blank_(keyword.ctc_blank_id),
        vocab_(vocab_size),
        cfg_(cfg) {
    check_keyword(keyword, vocab_size);
    if (cfg_.ctc_mode == CtcMode::kPsd && !cfg_.psd_threshold) {
      throw Error(ErrorCode::kInconsistentConfig, "PSD requires lambda_phi");
    }
    reset();
  }

  void reset() {
    const std::size_t n = topo_.size();
    score_.assign(n, kLogZero);
    consumed_.assign(n, 0);
    start_.assign(n, 0);
    next_score_.assign(n, kLogZero);
    next_consumed_.assign(n, 0);
    next_start_.assign(n, 0);
    cursor_ = 0;
    viterbi_updates_ = 0;
  }

  CtcStep step(std::span<const float> frame) {
    if (frame.size() != vocab_) {
      throw Error(ErrorCode::kFrameShapeMismatch,
                  "ctc frame has " + std::to_string(frame.size()) + " values, expected " +
                      std::to_string(vocab_));
    }
    if (cfg_.ctc_mode == CtcMode::kPsd &&
        psd_gate(frame, *cfg_.psd_threshold, blank_) == GateDecision::kSkip) {
      ++cursor_;
      return CtcStep{};
    }

    const std::size_t n = topo_.size();
    const double log_blank = safe_log(frame[blank_]);
    for (std::size_t j = 0; j < n; ++j) {
      // Candidates in preference order: fresh start, skip, next, self.
      double best = kLogZero;
      std::uint32_t best_consumed = 0;
      std::uint32_t best_start = cursor_;
      bool have = false;
      auto consider = [&](double s, std::uint32_t consumed, std::uint32_t start) {
        if (!have || s > best) {
          best = s;
          best_consumed = consumed;
          best_start = start;
          have = true;
        }
      };
      if (j <= 1) consider(0.0, 0, cursor_);
      if (j >= 2 && topo_.skip_allowed[j]) consider(score_[j - 2], consumed_[j - 2], start_[j - 2]);
      if (j >= 1) consider(score_[j - 1], consumed_[j - 1], start_[j - 1]);
      consider(score_[j], consumed_[j], start_[j]);

      const double emit = (j % 2 == 0) ? log_blank : safe_log(frame[topo_.labels[j]]);
      next_score_[j] = best + emit;
      next_consumed_[j] = best_consumed + 1;
      next_start_[j] = best_start;
    }
    score_.swap(next_score_);
    consumed_.swap(next_consumed_);
    start_.swap(next_start_);

    // Terminal: last token state, then trailing blank; ties keep the token state.
    std::size_t term = n - 2;
    if (score_[n - 1] > score_[n - 2]) term = n - 1;

    CtcStep out;
    out.processed = true;
    out.raw_log_score = score_[term];
    out.path_len = consumed_[term];
    out.span = cursor_ - start_[term] + 1;
    out.score = FrameScore::of(
        normalise_path_score(out.raw_log_score, out.path_len, out.span, cfg_));
    ++cursor_;
    ++viterbi_updates_;
    return out;
  }

  std::uint32_t cursor() const { return cursor_; }
  std::uint64_t viterbi_updates() const { return viterbi_updates_; }
  const CtcTopology& topology() const { return topo_; }

 private:
  CtcTopology topo_;
  std::uint32_t blank_;
  std::uint32_t vocab_;
  DecodeConfig cfg_;

  std::vector<double> score_;
  std::vector<std::uint32_t> consumed_;
  std::vector<std::uint32_t> start_;  // real frame index where the path began
  std::vector<double> next_score_;
  std::vector<std::uint32_t> next_consumed_;
  std::vector<std::uint32_t> next_start_;

  std::uint32_t cursor_ = 0;
  std::uint64_t viterbi_updates_ = 0;
};

struct CtcTrace {
  ScoreStream stream;
  std::vector<double> raw;  // linear best terminal score; 0 on skipped frames
  std::vector<std::uint32_t> path_len;
  std::uint64_t viterbi_updates = 0;
};

inline CtcTrace decode_ctc_trace(const PosteriorBundle& bundle, const KeywordSpec& keyword,
                                 const DecodeConfig& cfg) {
  if (!bundle.has_ctc()) {
    throw Error(ErrorCode::kMissingTensorForConfig, bundle.utterance_id + ": no ctc matrix");
  }
  CtcSearch search(keyword, cfg, bundle.vocab_size);
  CtcTrace trace;
  trace.stream.utterance_id = bundle.utterance_id;
  trace.stream.frames.reserve(bundle.num_frames);
  for (std::size_t t = 0; t < bundle.num_frames; ++t) {
    auto step = search.step(bundle.ctc_row(t));
    trace.stream.frames.push_back(step.score);
    trace.raw.push_back(step.processed ? std::exp(step.raw_log_score) : 0.0);
    trace.path_len.push_back(step.path_len);
  }
  trace.viterbi_updates = search.viterbi_updates();
  return trace;
}

inline ScoreStream decode_ctc_stream(const PosteriorBundle& bundle, const KeywordSpec& keyword,
                                     const DecodeConfig& cfg) {
  return decode_ctc_trace(bundle, keyword, cfg).stream;
}

/// Fraction of frames whose CTC blank posterior is >= lambda_phi.
inline double skipped_ratio(const PosteriorBundle& bundle, double lambda_phi,
                            std::uint32_t blank) {
  if (!bundle.has_ctc()) {
    throw Error(ErrorCode::kMissingTensorForConfig, bundle.utterance_id + ": no ctc matrix");
  }
  if (bundle.num_frames == 0) return 0.0;
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < bundle.num_frames; ++t) {
    if (psd_gate(bundle.ctc_row(t), lambda_phi, blank) == GateDecision::kSkip) ++skipped;
  }
  return static_cast<double>(skipped) / bundle.num_frames;
}

}  // namespace kws
