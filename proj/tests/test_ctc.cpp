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

#include "test_util.hpp"

namespace kws {
namespace {

using testing::make_keyword;
using testing::uniform_bundle;

DecodeConfig psd(double lambda) {
  DecodeConfig cfg;
  cfg.ctc_mode = CtcMode::kPsd;
  cfg.psd_threshold = lambda;
  return cfg;
}

TEST(CtcTopologyTest, SkipOnlyBetweenDistinctTokens) {
  auto topo = CtcTopology::build(make_keyword({1, 2, 2}));
  EXPECT_EQ(topo.labels, (std::vector<std::uint32_t>{0, 1, 0, 2, 0, 2, 0}));
  EXPECT_TRUE(topo.skip_allowed[3]);
  EXPECT_FALSE(topo.skip_allowed[5]);
  EXPECT_FALSE(topo.skip_allowed[1]);
  EXPECT_FALSE(topo.skip_allowed[2]);
}

TEST(PsdGate, ThresholdBoundaries) {
  const std::vector<float> peaky = {0.9995f, 0.0005f};
  EXPECT_EQ(psd_gate(peaky, 0.9993, 0), GateDecision::kSkip);
  EXPECT_EQ(psd_gate(peaky, 1.0, 0), GateDecision::kKeep);
  const std::vector<float> exact = {0.5f, 0.5f};
  EXPECT_EQ(psd_gate(exact, 0.5, 0), GateDecision::kSkip);
}

TEST(CtcSearchTest, SingleFrameSingleToken) {
  auto b = uniform_bundle(1, 1, 2);
  testing::set_ctc(b, 0, {0.1f, 0.9f});
  auto trace = decode_ctc_trace(b, make_keyword({1}), DecodeConfig{});
  EXPECT_NEAR(trace.raw[0], 0.9, 1e-7);
  EXPECT_NEAR(trace.stream.frames[0].value(), 0.9, 1e-7);
}

TEST(CtcSearchTest, TrailingBlankCountsTowardLength) {
  auto b = uniform_bundle(2, 1, 2);
  testing::set_ctc(b, 0, {0.1f, 0.9f});
  testing::set_ctc(b, 1, {0.8f, 0.2f});
  auto trace = decode_ctc_trace(b, make_keyword({1}), DecodeConfig{});
  EXPECT_NEAR(trace.raw[1], 0.72, 1e-7);
  EXPECT_EQ(trace.path_len[1], 2u);
  EXPECT_NEAR(trace.stream.frames[1].value(), std::sqrt(0.72), 1e-7);
}

TEST(CtcSearchTest, RepeatedTokenNeedsSeparatingBlank) {
  auto b = uniform_bundle(2, 2, 3);
  testing::set_ctc(b, 0, {0.0f, 1.0f, 0.0f});
  testing::set_ctc(b, 1, {0.0f, 1.0f, 0.0f});
  auto trace = decode_ctc_trace(b, make_keyword({1, 1}), DecodeConfig{});
  EXPECT_EQ(trace.raw[1], 0.0);
  EXPECT_EQ(trace.stream.frames[1].value(), 0.0);

  auto b3 = uniform_bundle(3, 2, 3);
  testing::set_ctc(b3, 0, {0.0f, 1.0f, 0.0f});
  testing::set_ctc(b3, 1, {1.0f, 0.0f, 0.0f});
  testing::set_ctc(b3, 2, {0.0f, 1.0f, 0.0f});
  auto t3 = decode_ctc_trace(b3, make_keyword({1, 1}), DecodeConfig{});
  EXPECT_NEAR(t3.raw[2], 1.0, 1e-12);
}

TEST(CtcSearchTest, AllBlankFramesUnderPsdGiveAllPlaceholders) {
  auto b = uniform_bundle(5, 1, 2);
  for (std::size_t t = 0; t < 5; ++t) testing::set_ctc(b, t, {0.9999f, 0.0001f});
  auto trace = decode_ctc_trace(b, make_keyword({1}), psd(0.999));
  EXPECT_EQ(trace.stream.placeholder_count(), 5u);
  EXPECT_DOUBLE_EQ(skipped_ratio(b, 0.999, 0), 1.0);
}

TEST(CtcSearchTest, FsdNeverEmitsPlaceholdersAndPsdAtOneMatchesFsd) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = random_instance(seed);
    auto fsd = decode_ctc_stream(inst.bundle, inst.keyword, DecodeConfig{});
    EXPECT_EQ(fsd.placeholder_count(), 0u);
    auto gated = decode_ctc_stream(inst.bundle, inst.keyword, psd(1.0));
    // Rows with an exact 1.0 blank are skipped even at lambda = 1.
    bool any_certain_blank = false;
    for (std::size_t t = 0; t < inst.bundle.num_frames; ++t) {
      any_certain_blank |= inst.bundle.ctc_row(t)[inst.keyword.ctc_blank_id] >= 1.0f;
    }
    if (!any_certain_blank) {
      EXPECT_EQ(fsd.frames, gated.frames) << "seed " << seed;
    }
  }
}

TEST(CtcSearchTest, SkippedRatioTracksThreshold) {
  auto b = uniform_bundle(4, 1, 2);
  testing::set_ctc(b, 0, {0.9999f, 0.0001f});
  testing::set_ctc(b, 1, {0.5f, 0.5f});
  testing::set_ctc(b, 2, {0.9999f, 0.0001f});
  testing::set_ctc(b, 3, {0.5f, 0.5f});
  EXPECT_DOUBLE_EQ(skipped_ratio(b, 0.999, 0), 0.5);
  EXPECT_DOUBLE_EQ(skipped_ratio(b, 1.0, 0), 0.0);
  EXPECT_DOUBLE_EQ(skipped_ratio(b, 1e-9, 0), 1.0);

  double prev = 0.0;
  for (double lambda : {1.0, 0.9999, 0.999, 0.99, 0.5}) {
    const double r = skipped_ratio(b, lambda, 0);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(CtcSearchTest, SkippedFramesFreezeStateButCountTowardTimeout) {
  // Token, then three certain-blank frames that PSD skips, then a blank.
  auto b = uniform_bundle(5, 1, 2);
  testing::set_ctc(b, 0, {0.1f, 0.9f});
  for (std::size_t t = 1; t < 4; ++t) testing::set_ctc(b, t, {0.99999f, 0.00001f});
  testing::set_ctc(b, 4, {0.8f, 0.2f});
  auto cfg = psd(0.9993);
  auto trace = decode_ctc_trace(b, make_keyword({1}), cfg);
  EXPECT_TRUE(trace.stream.frames[1].is_placeholder());
  EXPECT_EQ(trace.path_len[4], 2u);
  EXPECT_NEAR(trace.stream.frames[4].value(), std::sqrt(0.72), 1e-7);

  cfg.timeout = 4;
  auto timed = decode_ctc_stream(b, make_keyword({1}), cfg);
  EXPECT_EQ(timed.frames[4].value(), 0.0);
}

TEST(CtcSearchTest, PsdWithoutThresholdThrows) {
  DecodeConfig cfg;
  cfg.ctc_mode = CtcMode::kPsd;
  try {
    CtcSearch search(make_keyword({1}), cfg, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInconsistentConfig);
  }
}

TEST(CtcSearchTest, WrongFrameWidth) {
  CtcSearch search(make_keyword({1}), DecodeConfig{}, 3);
  std::vector<float> frame(2, 0.5f);
  try {
    search.step(frame);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFrameShapeMismatch);
  }
}

TEST(CtcSearchTest, UpdatesCountOnlyProcessedFrames) {
  auto b = uniform_bundle(4, 1, 2);
  testing::set_ctc(b, 0, {0.9999f, 0.0001f});
  testing::set_ctc(b, 2, {0.9999f, 0.0001f});
  auto trace = decode_ctc_trace(b, make_keyword({1}), psd(0.999));
  EXPECT_EQ(trace.viterbi_updates, 2u);
  auto full = decode_ctc_trace(b, make_keyword({1}), DecodeConfig{});
  EXPECT_EQ(full.viterbi_updates, 4u);
}

}  // namespace
}  // namespace kws
