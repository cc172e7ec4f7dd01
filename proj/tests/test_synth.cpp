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

#include <algorithm>

#include "test_util.hpp"

namespace kws {
namespace {

SynthSpec one_plant_spec() {
  SynthSpec s;
  s.utterance_id = "one";
  s.num_frames = 120;
  s.vocab_size = 8;
  s.keyword = {"hey", {1, 2, 3, 4}, 0, 0};
  s.plants.push_back({40, {3, 2, 4, 3}});
  s.peak_prob = 0.99;
  s.noise_temperature = 0.0;
  s.filler_ratio = 1.0;
  s.seed = 17;
  return s;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void expect_unique_max_inside(const std::vector<double>& v, std::size_t lo, std::size_t hi,
                              const std::string& what) {
  const std::size_t at = argmax(v);
  EXPECT_GE(at, lo) << what;
  EXPECT_LT(at, hi) << what;
  EXPECT_GT(v[at], 0.0) << what;
  EXPECT_EQ(std::count(v.begin(), v.end(), v[at]), 1) << what;
}

TEST(Synth, GeneratedBundleIsValid) {
  auto u = generate_utterance(one_plant_spec());
  EXPECT_TRUE(validate(u.bundle).empty());
  EXPECT_EQ(u.bundle.num_frames, 120u);
  EXPECT_EQ(u.bundle.keyword_rows, 5u);
  EXPECT_TRUE(u.truth.present_keywords.count("hey"));
  EXPECT_DOUBLE_EQ(u.truth.duration_seconds, u.bundle.duration_seconds());
}

TEST(Synth, SameSeedIsBitIdentical) {
  auto spec = one_plant_spec();
  spec.noise_temperature = 0.7;
  spec.filler_ratio = 0.4;
  const auto a = encode_kpf(generate_utterance(spec).bundle);
  const auto b = encode_kpf(generate_utterance(spec).bundle);
  EXPECT_EQ(a, b);
  spec.seed += 1;
  EXPECT_NE(a, encode_kpf(generate_utterance(spec).bundle));
}

TEST(Synth, SilenceIsFullySkippedByPsd) {
  SynthSpec s;
  s.num_frames = 50;
  s.keyword = {"k", {1, 2}, 0, 0};
  s.blank_floor = 0.9999;
  auto u = generate_utterance(s);
  EXPECT_EQ(skipped_ratio(u.bundle, 0.999, 0), 1.0);
  EXPECT_TRUE(u.truth.present_keywords.empty());
}

TEST(Synth, OverlappingPlantsRejected) {
  auto s = one_plant_spec();
  s.plants.push_back({45, {1, 1, 1, 1}});
  try {
    generate_utterance(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOverlappingPlants);
  }
  auto d = one_plant_spec();
  d.decoys.push_back({{50, {1, 1, 1, 1}}, 0, 5});
  EXPECT_THROW(generate_utterance(d), Error);
}

TEST(Synth, InvalidSpecsRejected) {
  auto s = one_plant_spec();
  s.plants[0].start = 118;
  try {
    generate_utterance(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSynthSpec);
  }
  s = one_plant_spec();
  s.plants[0].dwell = {1, 1};
  EXPECT_THROW(generate_utterance(s), Error);
  s = one_plant_spec();
  s.peak_prob = 1.0;
  EXPECT_THROW(generate_utterance(s), Error);
}

TEST(Synth, EveryBranchPeaksInsideThePlant) {
  const auto spec = one_plant_spec();
  const auto u = generate_utterance(spec);
  const std::size_t lo = spec.plants[0].start;
  const std::size_t hi = lo + spec.plants[0].length();

  DecodeConfig rnnt;
  expect_unique_max_inside(decode_transducer_stream(u.bundle, spec.keyword, rnnt).numeric(), lo,
                           hi, "rnnt");
  DecodeConfig tdt;
  tdt.transducer_mode = TransducerMode::kTdt;
  expect_unique_max_inside(decode_transducer_stream(u.bundle, spec.keyword, tdt).numeric(), lo,
                           hi, "tdt");
  DecodeConfig fsd;
  expect_unique_max_inside(decode_ctc_stream(u.bundle, spec.keyword, fsd).numeric(), lo, hi,
                           "ctc-fsd");
  DecodeConfig psd;
  psd.ctc_mode = CtcMode::kPsd;
  psd.psd_threshold = 0.9993;
  expect_unique_max_inside(decode_ctc_stream(u.bundle, spec.keyword, psd).numeric(), lo, hi,
                           "ctc-psd");
}

TEST(Synth, JointStreamPeaksInsideThePlant) {
  const auto spec = one_plant_spec();
  const auto u = generate_utterance(spec);
  const std::size_t lo = spec.plants[0].start;
  const std::size_t hi = lo + spec.plants[0].length();
  for (auto cfg : {DecodeConfig::mfs(), DecodeConfig::mfa()}) {
    for (auto f : kAllFusionStrategies) {
      cfg.fusion = f;
      const auto v = decode_joint(u.bundle, spec.keyword, cfg).numeric();
      const std::size_t at = argmax(v);
      EXPECT_GE(at, lo) << cfg.describe();
      EXPECT_LT(at, hi) << cfg.describe();
    }
  }
}

TEST(Synth, TdtDurationsPointAtNextSpike) {
  auto spec = one_plant_spec();
  const auto u = generate_utterance(spec);
  // Spikes at 40, 43, 45, 49.
  EXPECT_EQ(argmax_duration(u.bundle.duration_row(40)), 3u);
  EXPECT_EQ(argmax_duration(u.bundle.duration_row(43)), 2u);
  EXPECT_EQ(argmax_duration(u.bundle.duration_row(45)), 4u);
  EXPECT_EQ(argmax_duration(u.bundle.duration_row(10)), 4u);
  EXPECT_EQ(argmax_duration(u.bundle.duration_row(38)), 2u);
}

TEST(Synth, CorpusSpecsFollowTheRecipe) {
  CorpusSpec c;
  c.num_utterances = 20;
  c.num_frames = 300;
  c.decoys_per_utterance = 1;
  c.seed = 5;
  const auto specs = corpus_specs(c);
  ASSERT_EQ(specs.size(), 20u);
  std::size_t positives = 0;
  for (const auto& s : specs) {
    positives += s.plants.size();
    EXPECT_EQ(s.decoys.size(), 1u);
    EXPECT_NO_THROW(check_synth_spec(s));
  }
  EXPECT_EQ(positives, 10u);
  const auto again = corpus_specs(c);
  for (std::size_t i = 0; i < specs.size(); ++i) EXPECT_EQ(specs[i].seed, again[i].seed);
}

TEST(Synth, StandardCorpusMeetsSkipTargets) {
  const auto specs = corpus_specs(standard_speed_corpus(20));
  std::uint64_t frames = 0, skipped = 0, tdt_updates = 0;
  for (const auto& s : specs) {
    const auto u = generate_utterance(s);
    frames += u.bundle.num_frames;
    skipped += static_cast<std::uint64_t>(
        std::llround(skipped_ratio(u.bundle, 0.9993, 0) * u.bundle.num_frames));
    DecodeConfig tdt;
    tdt.transducer_mode = TransducerMode::kTdt;
    tdt_updates += decode_transducer_trace(u.bundle, s.keyword, tdt).lattice_updates;
  }
  EXPECT_GE(static_cast<double>(skipped) / frames, 0.35);
  EXPECT_GE(static_cast<double>(frames) / tdt_updates, 1.5);
}

TEST(Synth, RandomInstancesRespectLimits) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    EXPECT_TRUE(validate(inst.bundle).empty()) << seed;
    EXPECT_LE(inst.bundle.num_frames, 8u);
    EXPECT_LE(inst.keyword.length(), 3u);
    EXPECT_LE(inst.bundle.vocab_size, 5u);
    EXPECT_NO_THROW(check_keyword(inst.keyword, inst.bundle.vocab_size));
  }
}

}  // namespace
}  // namespace kws
