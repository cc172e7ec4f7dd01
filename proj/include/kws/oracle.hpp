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

// Exhaustive reference scorers for tiny instances. They enumerate every
// path explicitly, in the linear domain, and are only meant for testing.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kws/common.hpp"
#include "kws/posterior.hpp"

namespace kws::oracle {

inline constexpr std::uint32_t kMaxFrames = 10;
inline constexpr std::uint32_t kMaxTokens = 4;

inline void check_size(const PosteriorBundle& b, const KeywordSpec& kw) {
  if (b.num_frames > kMaxFrames || kw.length() > kMaxTokens) {
    throw Error(ErrorCode::kInstanceTooLarge,
                "oracle handles T <= " + std::to_string(kMaxFrames) + " and U <= " +
                    std::to_string(kMaxTokens) + ", got T=" + std::to_string(b.num_frames) +
                    " U=" + std::to_string(kw.length()));
  }
}

/// Frames a TDT decoder visits: start at 0, then jump by the most likely
/// duration (smallest on ties, at least 1). RNN-T visits every frame.
inline std::vector<std::uint32_t> visited_frames(const PosteriorBundle& b, bool tdt) {
  std::vector<std::uint32_t> out;
  std::uint32_t t = 0;
  while (t < b.num_frames) {
    out.push_back(t);
    std::uint32_t jump = 1;
    if (tdt) {
      const float* row = b.duration.data() + static_cast<std::size_t>(t) * b.duration_size;
      std::uint32_t best = 0;
      for (std::uint32_t d = 0; d < b.duration_size; ++d) {
        if (row[d] > row[best]) best = d;
      }
      jump = best == 0 ? 1 : best;
    }
    t += jump;
  }
  return out;
}

/// Best complete-path probability ending at each frame: the largest product
/// over lattice paths from (s, 0) to (t, U) times blank(t, U), over every
/// visited start frame s <= t. Zero on frames that are not visited.
inline std::vector<double> brute_force_transducer(const PosteriorBundle& b,
                                                  const KeywordSpec& kw, bool tdt = false) {
  check_size(b, kw);
  const std::uint32_t U = kw.length();
  const std::uint32_t V = b.vocab_size;
  auto p = [&](std::uint32_t t, std::uint32_t u, std::uint32_t v) -> double {
    return b.transducer[(static_cast<std::size_t>(t) * (U + 1) + u) * V + v];
  };
  const auto frames = visited_frames(b, tdt);
  std::vector<double> out(b.num_frames, 0.0);

  for (std::size_t end = 0; end < frames.size(); ++end) {
    double best = 0.0;
    // pos indexes `frames`; u is the number of tokens emitted so far.
    std::function<void(std::size_t, std::uint32_t, double)> walk =
        [&](std::size_t pos, std::uint32_t u, double prod) {
          const std::uint32_t t = frames[pos];
          if (u == U && pos == end) {
            best = std::max(best, prod * p(t, U, kw.transducer_blank_id));
          }
          if (u < U) walk(pos, u + 1, prod * p(t, u, kw.tokens[u]));
          if (pos < end) walk(pos + 1, u, prod * p(t, u, kw.transducer_blank_id));
        };
    for (std::size_t start = 0; start <= end; ++start) walk(start, 0, 1.0);
    out[frames[end]] = best;
  }
  return out;
}

/// Best probability of any frame window [s, t] whose CTC alignment
/// collapses to the keyword, ending at each frame t. With `lambda_phi` set,
/// frames whose blank posterior reaches it are removed first and score 0.
inline std::vector<double> brute_force_ctc(const PosteriorBundle& b, const KeywordSpec& kw,
                                           std::optional<double> lambda_phi = std::nullopt) {
  check_size(b, kw);
  const std::uint32_t U = kw.length();
  const std::uint32_t V = b.vocab_size;
  const std::uint32_t blank = kw.ctc_blank_id;
  auto p = [&](std::uint32_t t, std::uint32_t v) -> double {
    return b.ctc[static_cast<std::size_t>(t) * V + v];
  };

  std::vector<std::uint32_t> frames;
  for (std::uint32_t t = 0; t < b.num_frames; ++t) {
    if (lambda_phi && p(t, blank) >= *lambda_phi) continue;
    frames.push_back(t);
  }

  // Label sequence state: `matched` keyword tokens emitted, and whether the
  // previous label was that last token (a repeat would merge into it).
  std::vector<double> out(b.num_frames, 0.0);
  for (std::size_t end = 0; end < frames.size(); ++end) {
    double best = 0.0;
    std::function<void(std::size_t, std::uint32_t, bool, double)> walk =
        [&](std::size_t pos, std::uint32_t matched, bool on_token, double prod) {
          if (prod == 0.0) return;
          if (pos > end) {
            if (matched == U) best = std::max(best, prod);
            return;
          }
          const std::uint32_t t = frames[pos];
          walk(pos + 1, matched, false, prod * p(t, blank));
          if (on_token) walk(pos + 1, matched, true, prod * p(t, kw.tokens[matched - 1]));
          if (matched < U) {
            const bool merges = on_token && kw.tokens[matched] == kw.tokens[matched - 1];
            if (!merges) walk(pos + 1, matched + 1, true, prod * p(t, kw.tokens[matched]));
          }
        };
    for (std::size_t start = 0; start <= end; ++start) walk(start, 0, false, 1.0);
    out[frames[end]] = best;
  }
  return out;
}

}  // namespace kws::oracle
