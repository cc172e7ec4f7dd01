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

// Seeded comparison of the streaming searches against the exhaustive
// scorers in oracle.hpp.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kws/ctc_search.hpp"
#include "kws/oracle.hpp"
#include "kws/posterior.hpp"
#include "kws/synth.hpp"
#include "kws/transducer_search.hpp"

namespace kws {

enum class OracleSuite { kRnnt, kTdt, kCtcFsd, kCtcPsd };

inline constexpr std::array<OracleSuite, 4> kAllOracleSuites = {
    OracleSuite::kRnnt, OracleSuite::kTdt, OracleSuite::kCtcFsd, OracleSuite::kCtcPsd};

inline const char* to_string(OracleSuite s) {
  switch (s) {
    case OracleSuite::kRnnt: return "rnnt";
    case OracleSuite::kTdt: return "tdt";
    case OracleSuite::kCtcFsd: return "ctc-fsd";
    case OracleSuite::kCtcPsd: return "ctc-psd";
  }
  return "?";
}

inline constexpr double kVerifyLambdaPhi = 0.4;

struct OracleMismatch {
  std::uint64_t seed = 0;
  OracleSuite suite = OracleSuite::kRnnt;
  std::uint32_t frame = 0;  // 0-based
  double decoder = 0.0;
  double oracle = 0.0;
  double relative = 0.0;
};

struct OracleCheck {
  std::uint64_t seed = 0;
  std::array<double, 4> worst{};  // indexed like kAllOracleSuites
  std::vector<OracleMismatch> mismatches;
};

/// Raw decoder scores for one suite. `shift_fault` delays the result by one
/// frame, a deliberate off-by-one used to check that verification notices.
inline std::vector<double> decoder_raw(const RandomInstance& inst, OracleSuite suite,
                                       bool shift_fault = false) {
  DecodeConfig cfg;
  cfg.tdt_max_duration = std::max<std::uint32_t>(1, inst.bundle.max_duration());
  std::vector<double> raw;
  switch (suite) {
    case OracleSuite::kRnnt:
      raw = decode_transducer_trace(inst.bundle, inst.keyword, cfg).raw;
      break;
    case OracleSuite::kTdt:
      cfg.transducer_mode = TransducerMode::kTdt;
      raw = decode_transducer_trace(inst.bundle, inst.keyword, cfg).raw;
      break;
    case OracleSuite::kCtcFsd:
      raw = decode_ctc_trace(inst.bundle, inst.keyword, cfg).raw;
      break;
    case OracleSuite::kCtcPsd:
      cfg.ctc_mode = CtcMode::kPsd;
      cfg.psd_threshold = kVerifyLambdaPhi;
      raw = decode_ctc_trace(inst.bundle, inst.keyword, cfg).raw;
      break;
  }
  if (shift_fault && !raw.empty()) {
    raw.insert(raw.begin(), 0.0);
    raw.pop_back();
  }
  return raw;
}

inline std::vector<double> oracle_raw(const RandomInstance& inst, OracleSuite suite) {
  switch (suite) {
    case OracleSuite::kRnnt: return oracle::brute_force_transducer(inst.bundle, inst.keyword);
    case OracleSuite::kTdt:
      return oracle::brute_force_transducer(inst.bundle, inst.keyword, true);
    case OracleSuite::kCtcFsd: return oracle::brute_force_ctc(inst.bundle, inst.keyword);
    case OracleSuite::kCtcPsd:
      return oracle::brute_force_ctc(inst.bundle, inst.keyword, kVerifyLambdaPhi);
  }
  return {};
}

inline OracleCheck check_seed(std::uint64_t seed, const RandomBundleLimits& limits,
                              double tolerance, bool shift_fault = false,
                              const std::vector<OracleSuite>& suites = {kAllOracleSuites.begin(),
                                                                       kAllOracleSuites.end()}) {
  const auto inst = random_instance(seed, limits);
  OracleCheck check;
  check.seed = seed;
  for (auto suite : suites) {
    const auto dp = decoder_raw(inst, suite, shift_fault);
    const auto ref = oracle_raw(inst, suite);
    double& worst = check.worst[static_cast<std::size_t>(suite)];
    for (std::size_t t = 0; t < ref.size(); ++t) {
      const double rel = relative_difference(dp[t], ref[t]);
      worst = std::max(worst, rel);
      if (rel > tolerance) {
        check.mismatches.push_back(
            {seed, suite, static_cast<std::uint32_t>(t), dp[t], ref[t], rel});
      }
    }
  }
  return check;
}

}  // namespace kws
