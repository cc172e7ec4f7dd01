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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace kws {
namespace {

const FrameScore PH = FrameScore::placeholder();
FrameScore S(double v) { return FrameScore::of(v); }

double fuse_once(FusionStrategy f, FrameScore trans, FrameScore ctc) {
  FusionState state(20);
  return state.fuse(f, trans, ctc);
}

TEST(Fusion, DominationExamples) {
  EXPECT_EQ(fuse_once(FusionStrategy::kCtcDom, S(0.3), S(0.8)), 0.8);
  EXPECT_EQ(fuse_once(FusionStrategy::kCtcDom, S(0.3), PH), 0.3);
  EXPECT_EQ(fuse_once(FusionStrategy::kTransducerDom, S(0.3), S(0.8)), 0.3);
  EXPECT_EQ(fuse_once(FusionStrategy::kTransducerDom, PH, S(0.8)), 0.8);
  EXPECT_DOUBLE_EQ(fuse_once(FusionStrategy::kEquivalenceDom, S(0.4), S(0.6)), 0.5);
  EXPECT_EQ(fuse_once(FusionStrategy::kEquivalenceDom, PH, S(0.6)), 0.6);
  EXPECT_EQ(fuse_once(FusionStrategy::kEquivalenceDom, S(0.4), PH), 0.4);
}

TEST(Fusion, DoublePlaceholderIsANullFrame) {
  for (auto f : kAllFusionStrategies) {
    if (f == FusionStrategy::kCdcLast) continue;
    FusionState state(20);
    state.fuse(f, S(0.7), S(0.6));
    EXPECT_EQ(state.fuse(f, PH, PH), 0.0) << to_string(f);
  }
}

TEST(Fusion, CdcLastContinuesThroughDoublePlaceholder) {
  FusionState state(20);
  const double first = state.fuse(FusionStrategy::kCdcLast, S(0.7), S(0.7));
  EXPECT_DOUBLE_EQ(state.fuse(FusionStrategy::kCdcLast, PH, PH), first);
}

TEST(Fusion, CdcLastResolvesCtcPlaceholderToLastValue) {
  FusionState state(20);
  state.fuse(FusionStrategy::kCdcLast, S(0.5), S(0.7));
  const double out = state.fuse(FusionStrategy::kCdcLast, S(0.5), PH);
  EXPECT_EQ(state.last_ctc(), 0.7);
  // Windows (0.5,0.5) and (0.7,0.7) are parallel.
  EXPECT_NEAR(out, (0.5 + 0.7) / 2.0, 1e-15);
}

TEST(Fusion, CdcIdenticalWindowsGiveFullWeight) {
  for (auto f : {FusionStrategy::kCdcZero, FusionStrategy::kCdcLast}) {
    FusionState state(20);
    double out = 0.0;
    for (int i = 0; i < 5; ++i) out = state.fuse(f, S(0.6), S(0.6));
    EXPECT_DOUBLE_EQ(state.last_weight(), 1.0);
    EXPECT_DOUBLE_EQ(out, 0.6);
  }
}

TEST(Fusion, CdcZeroNormWindowGivesZeroWeight) {
  FusionState state(4);
  const double out = state.fuse(FusionStrategy::kCdcZero, S(0.5), S(0.0));
  EXPECT_EQ(state.last_weight(), 0.0);
  EXPECT_EQ(out, 0.5);
}

TEST(Fusion, CdcLastCarriesPreviousScore) {
  FusionState zero(3), last(3);
  zero.fuse(FusionStrategy::kCdcZero, S(0.4), S(0.8));
  last.fuse(FusionStrategy::kCdcLast, S(0.4), S(0.8));
  // Transducer skips: Zero sees 0, Last sees 0.4 again.
  const double z = zero.fuse(FusionStrategy::kCdcZero, PH, S(0.8));
  const double l = last.fuse(FusionStrategy::kCdcLast, PH, S(0.8));
  EXPECT_NE(z, l);
  // Last: windows (0.4,0.4) and (0.8,0.8) are parallel, w = 1.
  EXPECT_NEAR(last.last_weight(), 1.0, 1e-15);
  EXPECT_NEAR(l, (0.4 + 0.8) / 2.0, 1e-15);
  // Zero: windows (0.4,0) and (0.8,0.8): cos = 0.32 / (0.4 * 0.8 * sqrt2).
  const double w = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(zero.last_weight(), w, 1e-12);
  EXPECT_NEAR(z, (0.0 + w * 0.8) / (1.0 + w), 1e-12);
}

TEST(Fusion, WindowForgetsOldFrames) {
  FusionState state(2);
  state.fuse(FusionStrategy::kCdcZero, S(1.0), S(0.0));
  state.fuse(FusionStrategy::kCdcZero, S(0.0), S(1.0));
  EXPECT_EQ(state.last_weight(), 0.0);
  state.fuse(FusionStrategy::kCdcZero, S(0.0), S(1.0));
  // Window now holds frames 2 and 3 only: trans (0,0), zero norm.
  EXPECT_EQ(state.last_weight(), 0.0);
  state.fuse(FusionStrategy::kCdcZero, S(0.5), S(0.5));
  EXPECT_EQ(state.filled(), 2u);
  // Trans (0, 0.5), ctc (1, 0.5).
  EXPECT_NEAR(state.last_weight(), 1.0 / std::sqrt(5.0), 1e-12);
}

TEST(Fusion, ZeroWindowRejected) {
  EXPECT_THROW(FusionState(0), Error);
}

ScoreStream random_stream(std::mt19937_64& rng, std::size_t n, double ph_rate) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ScoreStream s;
  for (std::size_t i = 0; i < n; ++i) {
    if (unit(rng) < ph_rate) {
      s.frames.push_back(PH);
    } else {
      s.frames.push_back(S(unit(rng) < 0.1 ? 0.0 : unit(rng)));
    }
  }
  return s;
}

TEST(Fusion, CdcZeroEqualsCdcLastWithoutPlaceholders) {
  std::mt19937_64 rng(11);
  DecodeConfig zero, last;
  zero.fusion = FusionStrategy::kCdcZero;
  last.fusion = FusionStrategy::kCdcLast;
  for (int k = 0; k < 50; ++k) {
    // Exact zeros are excluded: they count as placeholders.
    std::uniform_real_distribution<double> unit(0.01, 1.0);
    ScoreStream a, b;
    for (int i = 0; i < 60; ++i) {
      a.frames.push_back(S(unit(rng)));
      b.frames.push_back(S(unit(rng)));
    }
    EXPECT_EQ(fuse_streams(a, b, zero).frames, fuse_streams(a, b, last).frames);
  }
}

TEST(Fusion, CtcDomWithAllTransducerPlaceholders) {
  std::mt19937_64 rng(3);
  DecodeConfig cfg;
  cfg.fusion = FusionStrategy::kCtcDom;
  auto ctc = random_stream(rng, 40, 0.3);
  ScoreStream trans;
  trans.frames.assign(40, PH);
  auto fused = fuse_streams(trans, ctc, cfg);
  EXPECT_EQ(fused.numeric(), ctc.numeric());
}

TEST(Fusion, EquivalenceDomMatchesDirectRule) {
  std::mt19937_64 rng(5);
  DecodeConfig cfg;
  cfg.fusion = FusionStrategy::kEquivalenceDom;
  for (int k = 0; k < 30; ++k) {
    auto a = random_stream(rng, 50, 0.4);
    auto b = random_stream(rng, 50, 0.4);
    auto fused = fuse_streams(a, b, cfg);
    for (std::size_t t = 0; t < 50; ++t) {
      const bool ha = a.frames[t].has_value() && a.frames[t].value() != 0.0;
      const bool hb = b.frames[t].has_value() && b.frames[t].value() != 0.0;
      double expect = 0.0;
      if (ha && hb) expect = (a.frames[t].value() + b.frames[t].value()) / 2;
      else if (ha) expect = a.frames[t].value();
      else if (hb) expect = b.frames[t].value();
      EXPECT_EQ(fused.frames[t].value(), expect);
    }
  }
}

TEST(Fusion, CdcMatchesDirectRecomputation) {
  std::mt19937_64 rng(9);
  for (auto strategy : {FusionStrategy::kCdcZero, FusionStrategy::kCdcLast}) {
    DecodeConfig cfg;
    cfg.fusion = strategy;
    cfg.cdc_window = 5;
    auto a = random_stream(rng, 40, 0.3);
    auto b = random_stream(rng, 40, 0.3);
    auto fused = fuse_streams(a, b, cfg);
    std::vector<double> ra, rb;
    double last_a = 0.0, last_b = 0.0;
    for (std::size_t t = 0; t < 40; ++t) {
      auto resolve = [&](FrameScore s, double& last) {
        const bool ph = s.is_placeholder() || s.value() == 0.0;
        const double v = ph ? (strategy == FusionStrategy::kCdcLast ? last : 0.0) : s.value();
        if (!ph) last = s.value();
        return v;
      };
      ra.push_back(resolve(a.frames[t], last_a));
      rb.push_back(resolve(b.frames[t], last_b));
      const std::size_t lo = t + 1 >= 5 ? t + 1 - 5 : 0;
      double dot = 0, na = 0, nb = 0;
      for (std::size_t i = lo; i <= t; ++i) {
        dot += ra[i] * rb[i];
        na += ra[i] * ra[i];
        nb += rb[i] * rb[i];
      }
      const double w = (na == 0 || nb == 0) ? 0.0 : std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
      EXPECT_NEAR(fused.frames[t].value(), (ra[t] + w * rb[t]) / (1 + w), 1e-12);
    }
  }
}

TEST(Fusion, LengthMismatch) {
  ScoreStream a{"a", {S(0.1)}}, b{"b", {S(0.1), S(0.2)}};
  try {
    fuse_streams(a, b, DecodeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(Fusion, OutputStaysInUnitInterval) {
  std::mt19937_64 rng(21);
  for (auto f : kAllFusionStrategies) {
    DecodeConfig cfg;
    cfg.fusion = f;
    auto fused = fuse_streams(random_stream(rng, 200, 0.3), random_stream(rng, 200, 0.3), cfg);
    EXPECT_EQ(fused.placeholder_count(), 0u);
    for (const auto& s : fused.frames) {
      EXPECT_GE(s.value(), 0.0);
      EXPECT_LE(s.value(), 1.0);
    }
  }
}

}  // namespace
}  // namespace kws
