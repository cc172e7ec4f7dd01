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

// Decoding throughput. Only decoding is timed; bundles are already in
// memory. Each repetition runs every config once, interleaved, and the
// fastest repetition per config is kept. A warm-up pass is not timed.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kws/joint_decoder.hpp"
#include "kws/posterior.hpp"

namespace kws {

struct BenchEntry {
  std::string label;
  DecodeConfig config;
  double seconds = 0.0;  // best repetition
  std::uint64_t frames = 0;
  FrameCounters counters;
  double speedup = 0.0;  // baseline seconds / seconds

  double frames_per_second() const { return seconds > 0.0 ? frames / seconds : 0.0; }
  double transducer_reduction() const {
    return frames ? 1.0 - static_cast<double>(counters.transducer_updates) / frames : 0.0;
  }
  double ctc_reduction() const {
    return frames ? 1.0 - static_cast<double>(counters.ctc_updates) / frames : 0.0;
  }
};

struct BenchReport {
  std::vector<BenchEntry> entries;  // entries[0] is the MFS baseline
  int repetitions = 0;
  std::size_t utterances = 0;

  const BenchEntry* find(const std::string& label) const {
    for (const auto& e : entries) {
      if (e.label == label) return &e;
    }
    return nullptr;
  }
};

struct BenchConfig {
  std::string label;
  DecodeConfig config;
};

/// Accumulates timings over corpus chunks so large corpora need not be
/// resident at once. Call `run` per chunk, then `finish`. The baseline is
/// the config labelled "MFS" if one is given, else DecodeConfig::mfs().
class BenchAccumulator {
 public:
  BenchAccumulator(const KeywordSpec& keyword, std::vector<BenchConfig> configs,
                   int repetitions)
      : keyword_(keyword), repetitions_(std::max(1, repetitions)) {
    BenchEntry base;
    base.label = "MFS";
    base.config = DecodeConfig::mfs();
    for (const auto& c : configs) {
      if (c.label == "MFS") base.config = c.config;
    }
    entries_.push_back(base);
    for (auto& c : configs) {
      if (c.label == "MFS") continue;
      BenchEntry e;
      e.label = c.label;
      e.config = c.config;
      entries_.push_back(e);
    }
    for (auto& e : entries_) e.config.check();
    total_.assign(entries_.size(), 0.0);
  }

  void run(std::span<const PosteriorBundle> chunk) {
    if (chunk.empty()) return;
    utterances_ += chunk.size();
    const std::size_t n = entries_.size();
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<FrameCounters> counters(n);

    for (std::size_t i = 0; i < n; ++i) decode_all(chunk, entries_[i].config);  // warm-up
    for (int r = 0; r < repetitions_; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        FrameCounters c = decode_all(chunk, entries_[i].config);
        const auto t1 = std::chrono::steady_clock::now();
        best[i] = std::min(best[i], std::chrono::duration<double>(t1 - t0).count());
        counters[i] = c;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      total_[i] += best[i];
      entries_[i].counters += counters[i];
      entries_[i].frames += counters[i].frames;
    }
  }

  BenchReport finish() const {
    BenchReport report;
    report.repetitions = repetitions_;
    report.utterances = utterances_;
    report.entries = entries_;
    for (std::size_t i = 0; i < entries_.size(); ++i) report.entries[i].seconds = total_[i];
    const double base = report.entries[0].seconds;
    for (auto& e : report.entries) {
      e.speedup = e.seconds > 0.0 ? base / e.seconds : 0.0;
    }
    report.entries[0].speedup = 1.0;
    return report;
  }

 private:
  FrameCounters decode_all(std::span<const PosteriorBundle> chunk, const DecodeConfig& cfg) {
    FrameCounters total;
    double sink = 0.0;
    for (const auto& b : chunk) {
      auto r = decode_joint_counted(b, keyword_, cfg);
      total += r.counters;
      if (!r.stream.frames.empty()) sink += r.stream.frames.back().numeric();
    }
    sink_ = sink_ + sink;
    return total;
  }

  KeywordSpec keyword_;
  int repetitions_;
  std::vector<BenchEntry> entries_;
  std::vector<double> total_;
  std::size_t utterances_ = 0;
  volatile double sink_ = 0.0;
};

inline BenchReport bench(std::span<const PosteriorBundle> corpus, const KeywordSpec& keyword,
                         const std::vector<BenchConfig>& configs, int repetitions) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "bench needs at least one bundle");
  BenchAccumulator acc(keyword, configs, repetitions);
  acc.run(corpus);
  return acc.finish();
}

/// The configurations of the throughput table.
inline std::vector<BenchConfig> standard_bench_configs() {
  std::vector<BenchConfig> out;
  out.push_back({"MFS", DecodeConfig::mfs()});
  DecodeConfig rnnt = DecodeConfig::mfs();
  rnnt.heads = Heads::kTransducerOnly;
  out.push_back({"RNN-T", rnnt});
  DecodeConfig tdt = rnnt;
  tdt.transducer_mode = TransducerMode::kTdt;
  out.push_back({"TDT-4", tdt});
  DecodeConfig fsd = DecodeConfig::mfs();
  fsd.heads = Heads::kCtcOnly;
  out.push_back({"CTC-FSD", fsd});
  DecodeConfig psd = fsd;
  psd.ctc_mode = CtcMode::kPsd;
  psd.psd_threshold = 0.9993;
  out.push_back({"CTC-PSD", psd});
  out.push_back({"MFA", DecodeConfig::mfa()});
  return out;
}

inline std::string format_bench_report(const BenchReport& report) {
  std::ostringstream os;
  os << "# utterances=" << report.utterances << " repetitions=" << report.repetitions << '\n';
  os << "config\tseconds\tframes_per_s\tspeedup\ttransducer_updates\tctc_updates\t"
        "transducer_reduction\tctc_reduction\tdescription\n";
  for (const auto& e : report.entries) {
    os << e.label << '\t' << std::fixed << std::setprecision(4) << e.seconds << '\t'
       << std::setprecision(0) << e.frames_per_second() << '\t' << std::setprecision(2)
       << e.speedup << "x\t" << e.counters.transducer_updates << '\t' << e.counters.ctc_updates
       << '\t' << std::setprecision(3) << e.transducer_reduction() << '\t' << e.ctc_reduction()
       << '\t' << e.config.describe() << '\n';
  }
  return os.str();
}

}  // namespace kws
