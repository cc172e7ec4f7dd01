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

// Frame-wise fusion of the Transducer and CTC score streams.
//
// Domination strategies pick one branch and fall back to the other on PH.
// CDC strategies resolve PH first (to 0, or to the last seen score), keep the
// last `window` resolved values of each branch, and weight the CTC score by
// the cosine similarity of the two windows:
//   fused = (s_trans + w * s_ctc) / (1 + w),   w = clamp(cos, 0, 1)
// The window includes the current frame.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "kws/common.hpp"
#include "kws/posterior.hpp"

namespace kws {

/// Cosine similarity clamped to [0, 1]; 0 when either vector has zero norm.
inline double cdc_weight(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

class FusionState {
 public:
  explicit FusionState(std::uint32_t window = 20)
      : window_(window), trans_(window, 0.0), ctc_(window, 0.0) {
    if (window == 0) throw Error(ErrorCode::kInconsistentConfig, "cdc window must be >= 1");
  }

  double fuse(FusionStrategy strategy, FrameScore s_trans, FrameScore s_ctc) {
    double out = 0.0;
    switch (strategy) {
      case FusionStrategy::kCtcDom:
        out = s_ctc.has_value() ? s_ctc.value() : s_trans.numeric();
        break;
      case FusionStrategy::kTransducerDom:
        out = s_trans.has_value() ? s_trans.value() : s_ctc.numeric();
        break;
      case FusionStrategy::kEquivalenceDom:
        if (s_trans.has_value() && s_ctc.has_value()) {
          out = 0.5 * (s_trans.value() + s_ctc.value());
        } else {
          out = s_trans.has_value() ? s_trans.value() : s_ctc.numeric();
        }
        break;
      case FusionStrategy::kCdcZero:
      case FusionStrategy::kCdcLast: {
        const bool last = strategy == FusionStrategy::kCdcLast;
        const double rt = s_trans.has_value() ? s_trans.value() : (last ? last_trans_ : 0.0);
        const double rc = s_ctc.has_value() ? s_ctc.value() : (last ? last_ctc_ : 0.0);
        push(rt, rc);
        weight_ = cdc_weight(std::span<const double>(trans_.data(), count_),
                             std::span<const double>(ctc_.data(), count_));
        out = (rt + weight_ * rc) / (1.0 + weight_);
        break;
      }
    }
    if (s_trans.has_value()) last_trans_ = s_trans.value();
    if (s_ctc.has_value()) last_ctc_ = s_ctc.value();
    ++frames_;
    return out;
  }

  std::uint32_t window() const { return window_; }
  std::size_t filled() const { return count_; }
  double last_weight() const { return weight_; }
  double last_trans() const { return last_trans_; }
  double last_ctc() const { return last_ctc_; }
  std::uint64_t frames() const { return frames_; }

 private:
  // Ring buffer; entry order does not matter for the cosine.
  void push(double rt, double rc) {
    trans_[head_] = rt;
    ctc_[head_] = rc;
    head_ = (head_ + 1) % window_;
    count_ = std::min<std::size_t>(count_ + 1, window_);
  }

  std::uint32_t window_;
  std::vector<double> trans_;
  std::vector<double> ctc_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double last_trans_ = 0.0;
  double last_ctc_ = 0.0;
  double weight_ = 0.0;
  std::uint64_t frames_ = 0;
};

inline double fuse_step(FusionStrategy strategy, FrameScore s_trans, FrameScore s_ctc,
                        FusionState& state) {
  return state.fuse(strategy, s_trans, s_ctc);
}

/// A branch score of exactly 0 carries no opinion and is fused as PH.
inline FrameScore zero_as_placeholder(FrameScore s) {
  return (s.has_value() && s.value() == 0.0) ? FrameScore::placeholder() : s;
}

/// Fuses two equal-length branch streams offline, applying the same
/// zero-as-placeholder rule as the streaming session. The result contains
/// no placeholders.
inline ScoreStream fuse_streams(const ScoreStream& trans, const ScoreStream& ctc,
                                const DecodeConfig& cfg) {
  if (trans.size() != ctc.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "transducer stream has " + std::to_string(trans.size()) +
                    " frames, ctc stream has " + std::to_string(ctc.size()));
  }
  FusionState state(cfg.cdc_window);
  ScoreStream out;
  out.utterance_id = trans.utterance_id.empty() ? ctc.utterance_id : trans.utterance_id;
  out.frames.reserve(trans.size());
  for (std::size_t t = 0; t < trans.size(); ++t) {
    const FrameScore s_trans = zero_as_placeholder(trans.frames[t]);
    const FrameScore s_ctc = zero_as_placeholder(ctc.frames[t]);
    out.frames.push_back(FrameScore::of(state.fuse(cfg.fusion, s_trans, s_ctc)));
  }
  return out;
}

}  // namespace kws
