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

// Synthetic posteriors with planted keywords.
//
// Frame roles:
//   spike     first frame of a planted token; that token carries peak_prob
//   in-word   remaining dwell frames of a planted token; blank-dominated
//   filler    non-keyword speech; a random non-keyword token carries peak_prob
//   silence   blank-dominated
// Blank-dominated rows put blank_floor on blank. Transducer rows emit a
// planted token only on lattice row u = i-1 for keyword position i; filler
// tokens are emitted from every row. TDT durations point at the next spike
// (capped at D_max), so the TDT path lands on every planted token.
// noise_temperature > 0 multiplies every entry by exp(tau * N(0,1)) and
// renormalises, independently per branch.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kws/common.hpp"
#include "kws/detection.hpp"
#include "kws/posterior.hpp"

namespace kws {

struct Plant {
  std::uint32_t start = 0;             // 0-based first frame
  std::vector<std::uint32_t> dwell;    // frames per keyword token, each >= 1

  std::uint32_t length() const {
    return std::accumulate(dwell.begin(), dwell.end(), std::uint32_t{0});
  }
};

/// A keyword-shaped sequence with one token replaced: acoustically close to
/// the keyword but not a positive.
struct Decoy {
  Plant plant;
  std::uint32_t position = 0;     // 0-based keyword position that is replaced
  std::uint32_t replacement = 0;  // token emitted there instead
};

struct SynthSpec {
  std::string utterance_id = "synth";
  std::uint32_t num_frames = 100;
  std::uint32_t vocab_size = 8;
  KeywordSpec keyword;
  std::vector<Plant> plants;
  std::vector<Decoy> decoys;
  double peak_prob = 0.99;
  double blank_floor = 0.9999;
  double filler_ratio = 0.0;
  double noise_temperature = 0.0;
  std::uint64_t seed = 0;
  bool tdt = true;
  std::uint32_t max_duration = 4;
  double duration_peak = 0.9;
  float frame_hop_seconds = 0.03f;
};

namespace detail {

enum class FrameRole : std::uint8_t { kSilence, kFiller, kSpike, kInWord };

struct FramePlan {
  FrameRole role = FrameRole::kSilence;
  std::uint32_t token = 0;     // emitted token for spikes and fillers
  std::uint32_t position = 0;  // keyword position of a spike
};

// Writes a row with `mass` on `hot` and the rest split: 80% to `second`
// (if different), the remainder uniformly over every other entry.
inline void peaked_row(std::span<double> row, std::uint32_t hot, double mass,
                       std::uint32_t second) {
  const std::size_t n = row.size();
  const double rest = 1.0 - mass;
  std::fill(row.begin(), row.end(), 0.0);
  if (n == 1) {
    row[0] = 1.0;
    return;
  }
  if (second != hot && second < n) {
    const double others = n > 2 ? 0.2 * rest / static_cast<double>(n - 2) : 0.0;
    for (std::size_t k = 0; k < n; ++k) row[k] = others;
    row[second] = n > 2 ? 0.8 * rest : rest;
  } else {
    const double others = rest / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) row[k] = others;
  }
  row[hot] = mass;
}

inline void jitter_row(std::span<double> row, double tau, std::mt19937_64& rng) {
  if (tau <= 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);
  double sum = 0.0;
  for (auto& p : row) {
    p *= std::exp(tau * normal(rng));
    sum += p;
  }
  for (auto& p : row) p /= sum;
}

inline void store_row(std::span<const double> row, float* out) {
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = static_cast<float>(row[k]);
}

inline void check_ranges(const SynthSpec& spec,
                         const std::vector<std::pair<std::uint32_t, std::uint32_t>>& ranges) {
  auto sorted = ranges;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].second > spec.num_frames) {
      throw Error(ErrorCode::kInvalidSynthSpec,
                  spec.utterance_id + ": plant at frame " + std::to_string(sorted[i].first) +
                      " runs past T=" + std::to_string(spec.num_frames));
    }
    if (i > 0 && sorted[i].first < sorted[i - 1].second) {
      throw Error(ErrorCode::kOverlappingPlants,
                  spec.utterance_id + ": plants at frames " +
                      std::to_string(sorted[i - 1].first) + " and " +
                      std::to_string(sorted[i].first) + " overlap");
    }
  }
}

}  // namespace detail

inline void check_synth_spec(const SynthSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kInvalidSynthSpec, spec.utterance_id + ": " + why);
  };
  if (spec.num_frames == 0) fail("num_frames must be positive");
  check_keyword(spec.keyword, spec.vocab_size);
  if (!(spec.peak_prob > 0.0 && spec.peak_prob < 1.0)) fail("peak_prob must lie in (0,1)");
  if (!(spec.blank_floor > 0.0 && spec.blank_floor < 1.0)) fail("blank_floor must lie in (0,1)");
  if (!(spec.filler_ratio >= 0.0 && spec.filler_ratio <= 1.0)) fail("filler_ratio must lie in [0,1]");
  if (!(spec.noise_temperature >= 0.0)) fail("noise_temperature must be >= 0");
  if (spec.tdt && spec.max_duration < 1) fail("max_duration must be >= 1");
  if (!(spec.duration_peak > 0.0 && spec.duration_peak < 1.0)) fail("duration_peak must lie in (0,1)");
  if (!(spec.frame_hop_seconds > 0.0f)) fail("frame_hop_seconds must be positive");

  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
  auto add = [&](const Plant& p, const char* what) {
    if (p.dwell.size() != spec.keyword.tokens.size()) {
      fail(std::string(what) + " needs one dwell per keyword token");
    }
    for (auto d : p.dwell) {
      if (d < 1) fail(std::string(what) + " dwell must be >= 1");
    }
    ranges.emplace_back(p.start, p.start + p.length());
  };
  for (const auto& p : spec.plants) add(p, "plant");
  for (const auto& d : spec.decoys) {
    add(d.plant, "decoy");
    if (d.position >= spec.keyword.tokens.size()) fail("decoy position outside keyword");
    if (d.replacement >= spec.vocab_size || d.replacement == spec.keyword.ctc_blank_id ||
        d.replacement == spec.keyword.transducer_blank_id) {
      fail("decoy replacement must be a non-blank token");
    }
  }
  detail::check_ranges(spec, ranges);
}

struct SynthUtterance {
  PosteriorBundle bundle;
  GroundTruth truth;
};

inline SynthUtterance generate_utterance(const SynthSpec& spec) {
  check_synth_spec(spec);
  const std::uint32_t T = spec.num_frames;
  const std::uint32_t V = spec.vocab_size;
  const KeywordSpec& kw = spec.keyword;
  const std::uint32_t U = kw.length();

  // Role of every frame.
  std::vector<detail::FramePlan> plan(T);
  auto lay = [&](const Plant& p, int replaced_pos, std::uint32_t replacement) {
    std::uint32_t t = p.start;
    for (std::uint32_t i = 0; i < U; ++i) {
      plan[t] = {detail::FrameRole::kSpike,
                 static_cast<int>(i) == replaced_pos ? replacement : kw.tokens[i], i};
      for (std::uint32_t k = 1; k < p.dwell[i]; ++k) plan[t + k].role = detail::FrameRole::kInWord;
      t += p.dwell[i];
    }
  };
  for (const auto& p : spec.plants) lay(p, -1, 0);
  for (const auto& d : spec.decoys) lay(d.plant, static_cast<int>(d.position), d.replacement);

  std::vector<std::uint32_t> filler_tokens;
  for (std::uint32_t v = 0; v < V; ++v) {
    if (v == kw.ctc_blank_id || v == kw.transducer_blank_id) continue;
    if (std::find(kw.tokens.begin(), kw.tokens.end(), v) != kw.tokens.end()) continue;
    filler_tokens.push_back(v);
  }

  std::mt19937_64 layout_rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& f : plan) {
    if (f.role != detail::FrameRole::kSilence) continue;
    if (!filler_tokens.empty() && unit(layout_rng) < spec.filler_ratio) {
      f.role = detail::FrameRole::kFiller;
      f.token = filler_tokens[static_cast<std::size_t>(unit(layout_rng) * filler_tokens.size()) %
                              filler_tokens.size()];
    }
  }

  // Independent noise streams per branch.
  std::mt19937_64 ctc_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 trans_rng(spec.seed ^ 0xc2b2ae3d27d4eb4full);
  std::mt19937_64 dur_rng(spec.seed ^ 0x165667b19e3779f9ull);
  const double tau = spec.noise_temperature;

  PosteriorBundle b;
  b.utterance_id = spec.utterance_id;
  b.num_frames = T;
  b.keyword_rows = U + 1;
  b.vocab_size = V;
  b.tdt = spec.tdt;
  b.duration_size = spec.tdt ? spec.max_duration + 1 : 0;
  b.ctc_blank_id = kw.ctc_blank_id;
  b.transducer_blank_id = kw.transducer_blank_id;
  b.frame_hop_seconds = spec.frame_hop_seconds;
  b.ctc.resize(static_cast<std::size_t>(T) * V);
  b.transducer.resize(static_cast<std::size_t>(T) * (U + 1) * V);
  if (spec.tdt) b.duration.resize(static_cast<std::size_t>(T) * b.duration_size);

  std::vector<double> row(V);
  const std::uint32_t ctc_blank = kw.ctc_blank_id;
  const std::uint32_t tr_blank = kw.transducer_blank_id;

  for (std::uint32_t t = 0; t < T; ++t) {
    const auto& f = plan[t];
    const bool speech = f.role == detail::FrameRole::kSpike || f.role == detail::FrameRole::kFiller;

    // CTC.
    if (speech) {
      detail::peaked_row(row, f.token, spec.peak_prob, ctc_blank);
    } else {
      detail::peaked_row(row, ctc_blank, spec.blank_floor, ctc_blank);
    }
    detail::jitter_row(row, tau, ctc_rng);
    detail::store_row(row, b.ctc.data() + static_cast<std::size_t>(t) * V);

    // Transducer lattice rows.
    for (std::uint32_t u = 0; u <= U; ++u) {
      const bool emits = (f.role == detail::FrameRole::kFiller) ||
                         (f.role == detail::FrameRole::kSpike && u == f.position);
      if (emits) {
        detail::peaked_row(row, f.token, spec.peak_prob, tr_blank);
      } else {
        detail::peaked_row(row, tr_blank, spec.blank_floor, tr_blank);
      }
      detail::jitter_row(row, tau, trans_rng);
      detail::store_row(row, b.transducer.data() + (static_cast<std::size_t>(t) * (U + 1) + u) * V);
    }
  }

  if (spec.tdt) {
    // Distance to the next spike strictly after t, capped at D_max.
    std::vector<double> drow(b.duration_size);
    std::uint32_t next_spike = T + spec.max_duration;
    for (std::uint32_t tt = T; tt-- > 0;) {
      const std::uint32_t target = std::min(spec.max_duration, next_spike - tt);
      detail::peaked_row(drow, target, spec.duration_peak, target);
      detail::jitter_row(drow, tau, dur_rng);
      detail::store_row(drow, b.duration.data() + static_cast<std::size_t>(tt) * b.duration_size);
      if (plan[tt].role == detail::FrameRole::kSpike) next_spike = tt;
    }
  }

  SynthUtterance out;
  out.bundle = std::move(b);
  out.truth.utterance_id = spec.utterance_id;
  out.truth.duration_seconds = static_cast<double>(T) * spec.frame_hop_seconds;
  if (!spec.plants.empty()) out.truth.present_keywords.insert(kw.keyword_id);
  return out;
}

// ---------------------------------------------------------------------------
// Corpora

struct CorpusSpec {
  std::string prefix = "utt";
  std::size_t num_utterances = 100;
  double positive_fraction = 0.5;
  std::uint32_t num_frames = 1000;
  std::uint32_t vocab_size = 12;
  KeywordSpec keyword{"hey", {1, 2, 3, 4}, 0, 0};
  std::uint32_t min_dwell = 2;
  std::uint32_t max_dwell = 5;
  std::uint32_t decoys_per_utterance = 0;
  double peak_prob = 0.99;
  double blank_floor = 0.9999;
  double filler_ratio = 0.5;
  double noise_temperature = 0.0;
  bool tdt = true;
  std::uint32_t max_duration = 4;
  float frame_hop_seconds = 0.03f;
  std::uint64_t seed = 0;
};

/// Per-utterance specs: positives carry one plant, every utterance carries
/// `decoys_per_utterance` decoys, all at non-overlapping random positions.
inline std::vector<SynthSpec> corpus_specs(const CorpusSpec& c) {
  std::vector<SynthSpec> specs;
  specs.reserve(c.num_utterances);
  std::mt19937_64 rng(c.seed);
  const std::uint32_t U = c.keyword.length();
  const std::size_t positives =
      static_cast<std::size_t>(std::llround(c.positive_fraction * c.num_utterances));

  std::vector<std::uint32_t> replacements;
  for (std::uint32_t v = 0; v < c.vocab_size; ++v) {
    if (v == c.keyword.ctc_blank_id || v == c.keyword.transducer_blank_id) continue;
    replacements.push_back(v);
  }

  for (std::size_t n = 0; n < c.num_utterances; ++n) {
    SynthSpec s;
    s.utterance_id = c.prefix + std::to_string(n);
    s.num_frames = c.num_frames;
    s.vocab_size = c.vocab_size;
    s.keyword = c.keyword;
    s.peak_prob = c.peak_prob;
    s.blank_floor = c.blank_floor;
    s.filler_ratio = c.filler_ratio;
    s.noise_temperature = c.noise_temperature;
    s.tdt = c.tdt;
    s.max_duration = c.max_duration;
    s.frame_hop_seconds = c.frame_hop_seconds;
    s.seed = rng();

    const std::size_t segments = (n < positives ? 1 : 0) + c.decoys_per_utterance;
    if (segments > 0) {
      // Split the utterance into equal slots and place one segment per slot.
      const std::uint32_t slot = c.num_frames / static_cast<std::uint32_t>(segments);
      std::uniform_int_distribution<std::uint32_t> dwell(c.min_dwell, c.max_dwell);
      for (std::size_t k = 0; k < segments; ++k) {
        Plant p;
        for (std::uint32_t i = 0; i < U; ++i) p.dwell.push_back(dwell(rng));
        const std::uint32_t len = p.length();
        if (len > slot) {
          throw Error(ErrorCode::kInvalidSynthSpec, "utterance too short for its plants");
        }
        std::uniform_int_distribution<std::uint32_t> offset(0, slot - len);
        p.start = static_cast<std::uint32_t>(k) * slot + offset(rng);
        if (k == 0 && n < positives) {
          s.plants.push_back(std::move(p));
        } else {
          Decoy d;
          d.plant = std::move(p);
          d.position = std::uniform_int_distribution<std::uint32_t>(0, U - 1)(rng);
          std::uint32_t r = c.keyword.tokens[d.position];
          while (r == c.keyword.tokens[d.position]) {
            r = replacements[std::uniform_int_distribution<std::size_t>(
                0, replacements.size() - 1)(rng)];
          }
          d.replacement = r;
          s.decoys.push_back(std::move(d));
        }
      }
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

/// Corpus used for throughput checks: 1000 utterances of 1000 frames, half
/// of them positive, half the background filler speech.
inline CorpusSpec standard_speed_corpus(std::size_t num_utterances = 1000,
                                        std::uint32_t num_frames = 1000,
                                        std::uint64_t seed = 20240917) {
  CorpusSpec c;
  c.prefix = "speed";
  c.num_utterances = num_utterances;
  c.num_frames = num_frames;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Small random bundles for oracle checks

struct RandomBundleLimits {
  std::uint32_t max_frames = 8;
  std::uint32_t max_keyword = 3;
  std::uint32_t max_vocab = 5;
  std::uint32_t max_duration = 4;
  bool with_duration = true;
  bool with_ctc = true;
};

struct RandomInstance {
  PosteriorBundle bundle;
  KeywordSpec keyword;
};

/// Random stochastic rows with mixed concentration; roughly one row in five
/// has exact zeros. Keywords may repeat tokens.
inline RandomInstance random_instance(std::uint64_t seed, const RandomBundleLimits& lim = {}) {
  std::mt19937_64 rng(seed * 0x2545f4914f6cdd1dull + 0x7f4a7c15ull);
  auto uniform_int = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RandomInstance inst;
  auto& b = inst.bundle;
  auto& kw = inst.keyword;
  b.utterance_id = "rand" + std::to_string(seed);
  b.num_frames = uniform_int(1, lim.max_frames);
  b.vocab_size = uniform_int(2, std::max<std::uint32_t>(2, lim.max_vocab));
  const std::uint32_t U = uniform_int(1, lim.max_keyword);
  b.keyword_rows = U + 1;

  kw.keyword_id = "kw";
  kw.ctc_blank_id = 0;
  kw.transducer_blank_id = 0;
  if (b.vocab_size >= 3 && unit(rng) < 0.3) {
    kw.ctc_blank_id = uniform_int(0, b.vocab_size - 1);
    kw.transducer_blank_id = unit(rng) < 0.5 ? kw.ctc_blank_id : uniform_int(0, b.vocab_size - 1);
  }
  std::vector<std::uint32_t> non_blank;
  for (std::uint32_t v = 0; v < b.vocab_size; ++v) {
    if (v != kw.ctc_blank_id && v != kw.transducer_blank_id) non_blank.push_back(v);
  }
  if (non_blank.empty()) {
    kw.transducer_blank_id = kw.ctc_blank_id;
    for (std::uint32_t v = 0; v < b.vocab_size; ++v) {
      if (v != kw.ctc_blank_id) non_blank.push_back(v);
    }
  }
  for (std::uint32_t i = 0; i < U; ++i) {
    kw.tokens.push_back(non_blank[uniform_int(0, static_cast<std::uint32_t>(non_blank.size()) - 1)]);
  }
  b.ctc_blank_id = kw.ctc_blank_id;
  b.transducer_blank_id = kw.transducer_blank_id;
  b.frame_hop_seconds = 0.03f;

  const double alphas[] = {0.1, 0.5, 1.0, 5.0};
  auto fill_rows = [&](std::vector<float>& out, std::size_t rows, std::size_t width) {
    out.resize(rows * width);
    std::vector<double> r(width);
    for (std::size_t i = 0; i < rows; ++i) {
      std::gamma_distribution<double> gamma(alphas[uniform_int(0, 3)], 1.0);
      const bool zeros = unit(rng) < 0.2;
      double sum = 0.0;
      for (auto& x : r) {
        x = gamma(rng);
        if (zeros && unit(rng) < 0.4) x = 0.0;
        sum += x;
      }
      if (sum <= 0.0) {
        std::fill(r.begin(), r.end(), 0.0);
        r[uniform_int(0, static_cast<std::uint32_t>(width) - 1)] = 1.0;
        sum = 1.0;
      }
      for (std::size_t k = 0; k < width; ++k) out[i * width + k] = static_cast<float>(r[k] / sum);
    }
  };

  fill_rows(b.transducer, static_cast<std::size_t>(b.num_frames) * b.keyword_rows, b.vocab_size);
  if (lim.with_ctc) fill_rows(b.ctc, b.num_frames, b.vocab_size);
  if (lim.with_duration) {
    b.tdt = true;
    b.duration_size = uniform_int(1, std::max<std::uint32_t>(1, lim.max_duration)) + 1;
    fill_rows(b.duration, b.num_frames, b.duration_size);
  }
  return inst;
}

}  // namespace kws
