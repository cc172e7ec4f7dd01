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

// Multi-head streaming decoding: both branch searches advance one frame per
// push, zero branch scores become PH, and the fusion state merges them.
// RNN-T + FSD gives the frame-synchronous (MFS) pipeline, TDT + PSD the
// frame-asynchronous (MFA) one. Single-head configs run one branch and
// report its numeric score (PH reads as 0).

#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "kws/common.hpp"
#include "kws/ctc_search.hpp"
#include "kws/fusion.hpp"
#include "kws/posterior.hpp"
#include "kws/transducer_search.hpp"

namespace kws {

struct FrameCounters {
  std::uint64_t frames = 0;
  std::uint64_t transducer_updates = 0;
  std::uint64_t ctc_updates = 0;

  FrameCounters& operator+=(const FrameCounters& o) {
    frames += o.frames;
    transducer_updates += o.transducer_updates;
    ctc_updates += o.ctc_updates;
    return *this;
  }
};

struct JointFrame {
  double fused = 0.0;
  FrameScore transducer;  // after the zero-as-PH rule
  FrameScore ctc;
};

class JointDecodeSession {
 public:
  JointDecodeSession(const KeywordSpec& keyword, const DecodeConfig& cfg,
                     std::uint32_t vocab_size)
      : cfg_(cfg), fusion_(cfg.cdc_window) {
    cfg_.check();
    check_keyword(keyword, vocab_size);
    if (cfg_.uses_transducer()) transducer_.emplace(keyword, cfg_, vocab_size);
    if (cfg_.uses_ctc()) ctc_.emplace(keyword, cfg_, vocab_size);
  }

  /// Advances every sub-state by one frame. Spans for a branch the config
  /// does not use are ignored and may be empty.
  JointFrame push(std::span<const float> trans_frame, std::span<const float> duration,
                  std::span<const float> ctc_frame) {
    JointFrame out;
    if (transducer_) {
      out.transducer = zero_as_placeholder(transducer_->step(trans_frame, duration).score);
    }
    if (ctc_) out.ctc = zero_as_placeholder(ctc_->step(ctc_frame).score);
    switch (cfg_.heads) {
      case Heads::kJoint:
        out.fused = fusion_.fuse(cfg_.fusion, out.transducer, out.ctc);
        break;
      case Heads::kTransducerOnly:
        out.fused = out.transducer.numeric();
        break;
      case Heads::kCtcOnly:
        out.fused = out.ctc.numeric();
        break;
    }
    ++cursor_;
    return out;
  }

  double push_frame(std::span<const float> trans_frame, std::span<const float> duration,
                    std::span<const float> ctc_frame) {
    return push(trans_frame, duration, ctc_frame).fused;
  }

  std::uint32_t cursor() const { return cursor_; }
  const DecodeConfig& config() const { return cfg_; }

  FrameCounters counters() const {
    FrameCounters c;
    c.frames = cursor_;
    if (transducer_) c.transducer_updates = transducer_->lattice_updates();
    if (ctc_) c.ctc_updates = ctc_->viterbi_updates();
    return c;
  }

 private:
  DecodeConfig cfg_;
  std::optional<TransducerSearch> transducer_;
  std::optional<CtcSearch> ctc_;
  FusionState fusion_;
  std::uint32_t cursor_ = 0;
};

inline JointDecodeSession open_session(const KeywordSpec& keyword, const DecodeConfig& cfg,
                                       std::uint32_t vocab_size) {
  return JointDecodeSession(keyword, cfg, vocab_size);
}

/// Throws kMissingTensorForConfig if the bundle lacks a tensor the config reads.
inline void require_joint_inputs(const PosteriorBundle& bundle, const KeywordSpec& keyword,
                                 const DecodeConfig& cfg) {
  auto missing = [&](const char* what) {
    throw Error(ErrorCode::kMissingTensorForConfig,
                bundle.utterance_id + ": config '" + cfg.describe() + "' needs " + what);
  };
  if (cfg.uses_transducer()) {
    if (!bundle.has_transducer()) missing("a transducer tensor");
    if (cfg.transducer_mode == TransducerMode::kTdt && !bundle.has_duration()) {
      missing("a duration matrix");
    }
    if (keyword.length() + 1 != bundle.keyword_rows) {
      throw Error(ErrorCode::kFrameShapeMismatch,
                  bundle.utterance_id + ": lattice rows " +
                      std::to_string(bundle.keyword_rows) + " do not fit keyword '" +
                      keyword.keyword_id + "'");
    }
  }
  if (cfg.uses_ctc() && !bundle.has_ctc()) missing("a ctc matrix");
}

struct JointResult {
  ScoreStream stream;
  FrameCounters counters;
};

inline JointResult decode_joint_counted(const PosteriorBundle& bundle,
                                        const KeywordSpec& keyword, const DecodeConfig& cfg) {
  cfg.check();
  require_joint_inputs(bundle, keyword, cfg);
  JointDecodeSession session(keyword, cfg, bundle.vocab_size);
  const bool tdt = cfg.uses_transducer() && cfg.transducer_mode == TransducerMode::kTdt;
  JointResult result;
  result.stream.utterance_id = bundle.utterance_id;
  result.stream.frames.reserve(bundle.num_frames);
  for (std::size_t t = 0; t < bundle.num_frames; ++t) {
    const double fused = session.push_frame(
        cfg.uses_transducer() ? bundle.transducer_frame(t) : std::span<const float>{},
        tdt ? bundle.duration_row(t) : std::span<const float>{},
        cfg.uses_ctc() ? bundle.ctc_row(t) : std::span<const float>{});
    result.stream.frames.push_back(FrameScore::of(fused));
  }
  result.counters = session.counters();
  return result;
}

inline ScoreStream decode_joint(const PosteriorBundle& bundle, const KeywordSpec& keyword,
                                const DecodeConfig& cfg) {
  return decode_joint_counted(bundle, keyword, cfg).stream;
}

}  // namespace kws
