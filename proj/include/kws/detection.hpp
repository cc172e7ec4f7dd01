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

// Detection events and utterance-level detection metrics.
//
// Matching is utterance-level: an (utterance, keyword) pair is a positive
// when the utterance's truth lists the keyword, otherwise a negative whose
// duration counts toward the false-alarm hours of that keyword. A pair fires
// at threshold theta when its peak fused score is >= theta.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kws/common.hpp"

namespace kws {

inline constexpr std::uint32_t kDefaultRefractoryFrames = 60;

struct DetectionEvent {
  std::string keyword_id;
  std::string utterance_id;
  std::uint32_t trigger_frame = 0;  // 1-based frame index
  double trigger_time = 0.0;        // end of the trigger frame, seconds
  double peak_score = 0.0;
};

/// Fires at the first frame whose score reaches `threshold`, then suppresses
/// the next `refractory` frames; the event's peak is the maximum over the
/// trigger frame and its suppression window.
inline std::vector<DetectionEvent> extract_events(std::span<const double> scores,
                                                  double threshold, std::uint32_t refractory,
                                                  const std::string& keyword_id,
                                                  double frame_hop_seconds,
                                                  const std::string& utterance_id = {}) {
  std::vector<DetectionEvent> events;
  std::size_t t = 0;
  while (t < scores.size()) {
    if (scores[t] < threshold) {
      ++t;
      continue;
    }
    const std::size_t end = std::min(scores.size(), t + refractory + 1);
    double peak = scores[t];
    for (std::size_t k = t + 1; k < end; ++k) peak = std::max(peak, scores[k]);
    DetectionEvent ev;
    ev.keyword_id = keyword_id;
    ev.utterance_id = utterance_id;
    ev.trigger_frame = static_cast<std::uint32_t>(t + 1);
    ev.trigger_time = static_cast<double>(t + 1) * frame_hop_seconds;
    ev.peak_score = peak;
    events.push_back(std::move(ev));
    t = end;
  }
  return events;
}

/// PH frames read as 0.
inline std::vector<DetectionEvent> extract_events(const ScoreStream& stream, double threshold,
                                                  std::uint32_t refractory,
                                                  const std::string& keyword_id,
                                                  double frame_hop_seconds) {
  const auto values = stream.numeric();
  return extract_events(values, threshold, refractory, keyword_id, frame_hop_seconds,
                        stream.utterance_id);
}

inline double peak_score(std::span<const double> scores) {
  double peak = 0.0;
  for (double s : scores) peak = std::max(peak, s);
  return peak;
}

// ---------------------------------------------------------------------------
// Ground truth

struct GroundTruth {
  std::string utterance_id;
  std::set<std::string> present_keywords;  // empty for negative utterances
  double duration_seconds = 0.0;
};

using TruthSet = std::map<std::string, GroundTruth>;

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Parses `utterance_id<TAB>duration_seconds<TAB>kw1,kw2` (keywords may be empty).
inline GroundTruth parse_truth_fields(const std::vector<std::string>& fields) {
  if (fields.size() < 2 || fields.size() > 3) {
    throw Error(ErrorCode::kParseError, "truth record needs 2 or 3 tab-separated fields");
  }
  GroundTruth g;
  g.utterance_id = fields[0];
  if (g.utterance_id.empty()) throw Error(ErrorCode::kParseError, "empty utterance id");
  try {
    std::size_t used = 0;
    g.duration_seconds = std::stod(fields[1], &used);
    if (used != fields[1].size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, "bad duration '" + fields[1] + "'");
  }
  if (!(g.duration_seconds > 0.0) || !std::isfinite(g.duration_seconds)) {
    throw Error(ErrorCode::kParseError,
                g.utterance_id + ": duration must be positive, got " + fields[1]);
  }
  if (fields.size() == 3 && !fields[2].empty()) {
    for (auto& kw : detail::split(fields[2], ',')) {
      if (!kw.empty()) g.present_keywords.insert(kw);
    }
  }
  return g;
}

inline std::string format_truth_record(const GroundTruth& g) {
  std::ostringstream os;
  os << g.utterance_id << '\t' << std::setprecision(17) << g.duration_seconds << '\t';
  bool first = true;
  for (const auto& kw : g.present_keywords) {
    if (!first) os << ',';
    os << kw;
    first = false;
  }
  return os.str();
}

inline TruthSet read_truth_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open truth file " + path.string());
  TruthSet truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    GroundTruth g;
    try {
      g = parse_truth_fields(detail::split(line, '\t'));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!truth.emplace(g.utterance_id, g).second) {
      throw Error(ErrorCode::kParseError, path.string() + ": duplicate utterance " + g.utterance_id);
    }
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Threshold sweep

struct SweepPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double far_per_hour = 0.0;
  std::size_t hits = 0;
  std::size_t false_alarms = 0;

  double miss_rate() const { return 1.0 - recall; }
};

struct SweepCurve {
  std::vector<SweepPoint> points;  // ascending threshold
  std::size_t positives = 0;
  double negative_hours = 0.0;
};

struct SweepReport {
  SweepCurve pooled;
  std::map<std::string, SweepCurve> per_keyword;
};

/// Peak fused score per (utterance_id, keyword_id).
using PeakScores = std::map<std::pair<std::string, std::string>, double>;

namespace detail {

struct LabelledPeak {
  double score;
  bool positive;
};

inline SweepCurve sweep_curve(std::vector<LabelledPeak> peaks, double negative_seconds) {
  SweepCurve curve;
  curve.negative_hours = negative_seconds / 3600.0;
  for (const auto& p : peaks) curve.positives += p.positive ? 1 : 0;

  auto far = [&](std::size_t fa) {
    if (fa == 0) return 0.0;
    return curve.negative_hours > 0.0 ? fa / curve.negative_hours
                                      : std::numeric_limits<double>::infinity();
  };
  auto recall = [&](std::size_t hits) {
    return curve.positives == 0 ? 0.0 : static_cast<double>(hits) / curve.positives;
  };

  // Walk thresholds from the top so hit / false-alarm counts accumulate.
  std::sort(peaks.begin(), peaks.end(),
            [](const LabelledPeak& a, const LabelledPeak& b) { return a.score > b.score; });
  std::vector<SweepPoint> desc;
  const double max_peak = peaks.empty() ? 0.0 : peaks.front().score;
  desc.push_back({std::nextafter(max_peak, std::numeric_limits<double>::infinity()), 0.0,
                  0.0, 0, 0});
  std::size_t hits = 0, fa = 0;
  for (std::size_t i = 0; i < peaks.size();) {
    const double theta = peaks[i].score;
    while (i < peaks.size() && peaks[i].score == theta) {
      (peaks[i].positive ? hits : fa) += 1;
      ++i;
    }
    desc.push_back({theta, recall(hits), far(fa), hits, fa});
  }
  curve.points.assign(desc.rbegin(), desc.rend());
  return curve;
}

}  // namespace detail

/// Sweeps every distinct peak score as a threshold, plus one all-reject
/// threshold just above the largest peak.
inline SweepReport sweep(const PeakScores& peaks, const TruthSet& truth) {
  if (peaks.empty()) throw Error(ErrorCode::kEmptyCorpus, "no scored utterances");
  std::map<std::string, std::vector<detail::LabelledPeak>> by_keyword;
  std::map<std::string, double> negative_seconds;
  std::vector<detail::LabelledPeak> pooled;
  double pooled_negative_seconds = 0.0;
  for (const auto& [key, score] : peaks) {
    const auto& [utt, kw] = key;
    auto it = truth.find(utt);
    if (it == truth.end()) throw Error(ErrorCode::kMissingTruth, "no truth for utterance " + utt);
    const bool positive = it->second.present_keywords.count(kw) > 0;
    by_keyword[kw].push_back({score, positive});
    pooled.push_back({score, positive});
    if (!positive) {
      negative_seconds[kw] += it->second.duration_seconds;
      pooled_negative_seconds += it->second.duration_seconds;
    }
  }
  SweepReport report;
  report.pooled = detail::sweep_curve(std::move(pooled), pooled_negative_seconds);
  for (auto& [kw, list] : by_keyword) {
    report.per_keyword[kw] = detail::sweep_curve(std::move(list), negative_seconds[kw]);
  }
  return report;
}

/// Recall and FAR at an arbitrary threshold, computed directly from the peaks.
inline SweepPoint evaluate_at(const PeakScores& peaks, const TruthSet& truth, double threshold) {
  SweepPoint p;
  p.threshold = threshold;
  std::size_t positives = 0;
  double negative_seconds = 0.0;
  for (const auto& [key, score] : peaks) {
    auto it = truth.find(key.first);
    if (it == truth.end()) {
      throw Error(ErrorCode::kMissingTruth, "no truth for utterance " + key.first);
    }
    const bool positive = it->second.present_keywords.count(key.second) > 0;
    const bool fires = score >= threshold;
    if (positive) {
      ++positives;
      p.hits += fires ? 1 : 0;
    } else {
      negative_seconds += it->second.duration_seconds;
      p.false_alarms += fires ? 1 : 0;
    }
  }
  p.recall = positives == 0 ? 0.0 : static_cast<double>(p.hits) / positives;
  const double hours = negative_seconds / 3600.0;
  p.far_per_hour = p.false_alarms == 0 ? 0.0
                   : hours > 0.0       ? p.false_alarms / hours
                                       : std::numeric_limits<double>::infinity();
  return p;
}

/// Recall at the smallest threshold whose FAR does not exceed `far_target`.
/// far_target = 0 gives accuracy at FAR = 0.
inline double recall_at_far(const SweepCurve& curve, double far_target) {
  for (const auto& p : curve.points) {
    if (p.far_per_hour <= far_target) return p.recall;
  }
  return 0.0;
}

inline double macro_average(const std::map<std::string, double>& per_keyword) {
  if (per_keyword.empty()) throw Error(ErrorCode::kEmptyMap, "macro average of nothing");
  double sum = 0.0;
  for (const auto& [kw, v] : per_keyword) sum += v;
  return sum / static_cast<double>(per_keyword.size());
}

inline std::string format_sweep_report(const SweepReport& report,
                                       const std::vector<double>& far_targets) {
  std::ostringstream os;
  os << std::setprecision(9);
  auto curve_block = [&](const std::string& label, const SweepCurve& curve) {
    os << "[" << label << "]\n";
    os << "positives\t" << curve.positives << "\n";
    os << "negative_hours\t" << curve.negative_hours << "\n";
    os << "threshold\trecall\tfar_per_hour\n";
    for (const auto& p : curve.points) {
      os << p.threshold << '\t' << p.recall << '\t' << p.far_per_hour << '\n';
    }
    for (double target : far_targets) {
      os << "recall@far=" << target << '\t' << recall_at_far(curve, target) << '\n';
    }
    os << "accuracy@far=0\t" << recall_at_far(curve, 0.0) << '\n';
  };
  curve_block("pooled", report.pooled);
  for (const auto& [kw, curve] : report.per_keyword) curve_block("keyword " + kw, curve);
  if (report.per_keyword.size() > 1) {
    os << "[macro]\n";
    auto macro_at = [&](double target) {
      std::map<std::string, double> m;
      for (const auto& [kw, curve] : report.per_keyword) m[kw] = recall_at_far(curve, target);
      return macro_average(m);
    };
    for (double target : far_targets) {
      os << "macro_recall@far=" << target << '\t' << macro_at(target) << '\n';
    }
    os << "macro_accuracy@far=0\t" << macro_at(0.0) << '\n';
  }
  return os.str();
}

}  // namespace kws
