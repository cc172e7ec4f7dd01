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

#include "test_util.hpp"

namespace kws {
namespace {

using testing::make_keyword;
using testing::uniform_bundle;

TEST(Oracle, TransducerSinglePath) {
  auto b = uniform_bundle(1, 1, 2);
  testing::set_trans(b, 0, 0, {0.1f, 0.9f});
  testing::set_trans(b, 0, 1, {0.8f, 0.2f});
  auto out = oracle::brute_force_transducer(b, make_keyword({1}));
  EXPECT_NEAR(out[0], 0.72, 1e-7);
}

TEST(Oracle, TransducerZeroTokensGiveZeros) {
  auto b = uniform_bundle(4, 2, 3);
  for (std::size_t t = 0; t < 4; ++t) {
    testing::set_trans(b, t, 0, {0.5f, 0.0f, 0.5f});
    testing::set_trans(b, t, 1, {0.5f, 0.5f, 0.0f});
  }
  for (double v : oracle::brute_force_transducer(b, make_keyword({1, 2}))) EXPECT_EQ(v, 0.0);
}

TEST(Oracle, CtcSingleAlignment) {
  auto b = uniform_bundle(1, 1, 2);
  testing::set_ctc(b, 0, {0.1f, 0.9f});
  EXPECT_NEAR(oracle::brute_force_ctc(b, make_keyword({1}))[0], 0.9, 1e-7);
}

TEST(Oracle, CtcRepeatedTokenNeedsBlank) {
  auto b = uniform_bundle(2, 2, 2);
  testing::set_ctc(b, 0, {0.0f, 1.0f});
  testing::set_ctc(b, 1, {0.0f, 1.0f});
  EXPECT_EQ(oracle::brute_force_ctc(b, make_keyword({1, 1}))[1], 0.0);
}

TEST(Oracle, SizeLimits) {
  auto big = uniform_bundle(11, 1, 2);
  try {
    oracle::brute_force_transducer(big, make_keyword({1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInstanceTooLarge);
  }
  auto wide = uniform_bundle(3, 5, 3);
  EXPECT_THROW(oracle::brute_force_ctc(wide, make_keyword({1, 2, 1, 2, 1})), Error);
}

double worst(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, relative_difference(a[i], b[i]));
  return w;
}

TEST(Oracle, TransducerMatchesDecoder) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    const auto cfg = testing::config_for(inst.bundle, {});
    const auto dp = decode_transducer_trace(inst.bundle, inst.keyword, cfg).raw;
    const auto ref = oracle::brute_force_transducer(inst.bundle, inst.keyword);
    EXPECT_LE(worst(dp, ref), 1e-9) << "seed " << seed;
  }
}

TEST(Oracle, TdtMatchesDecoder) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    auto cfg = testing::config_for(inst.bundle, {});
    cfg.transducer_mode = TransducerMode::kTdt;
    const auto dp = decode_transducer_trace(inst.bundle, inst.keyword, cfg).raw;
    const auto ref = oracle::brute_force_transducer(inst.bundle, inst.keyword, true);
    EXPECT_LE(worst(dp, ref), 1e-9) << "seed " << seed;
  }
}

TEST(Oracle, CtcMatchesDecoder) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    const auto dp = decode_ctc_trace(inst.bundle, inst.keyword, DecodeConfig{}).raw;
    const auto ref = oracle::brute_force_ctc(inst.bundle, inst.keyword);
    EXPECT_LE(worst(dp, ref), 1e-9) << "seed " << seed;
  }
}

TEST(Oracle, PsdMatchesDecoderOnKeptFrames) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    DecodeConfig cfg;
    cfg.ctc_mode = CtcMode::kPsd;
    cfg.psd_threshold = 0.4;
    const auto dp = decode_ctc_trace(inst.bundle, inst.keyword, cfg).raw;
    const auto ref = oracle::brute_force_ctc(inst.bundle, inst.keyword, 0.4);
    EXPECT_LE(worst(dp, ref), 1e-9) << "seed " << seed;
  }
}

TEST(Oracle, CheckSeedFlagsShiftedScores) {
  const RandomBundleLimits limits;
  const auto clean = check_seed(3, limits, 1e-9);
  EXPECT_TRUE(clean.mismatches.empty());
  const auto shifted = check_seed(3, limits, 1e-9, true);
  ASSERT_FALSE(shifted.mismatches.empty());
  EXPECT_EQ(shifted.mismatches.front().seed, 3u);
  const auto only_ctc = check_seed(3, limits, 1e-9, true, {OracleSuite::kCtcFsd});
  for (const auto& m : only_ctc.mismatches) EXPECT_EQ(m.suite, OracleSuite::kCtcFsd);
  EXPECT_EQ(only_ctc.worst[static_cast<std::size_t>(OracleSuite::kRnnt)], 0.0);
}

}  // namespace
}  // namespace kws
