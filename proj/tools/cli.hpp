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

// kwsctl: decode, evaluate, bench, generate and verify.
//
// Exit status: 0 success, 1 input or configuration error, 2 verification
// failure.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kws/kws.hpp"

namespace kws::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitVerify = 2;

inline const std::vector<double> kDefaultFarTargets = {0.02, 0.05, 0.5, 1.0};

// ---------------------------------------------------------------------------
// Worker pool

inline unsigned resolve_jobs(unsigned jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : std::min(hw, 16u);
}

/// Runs fn(0..n-1) on at most `jobs` threads. The failure with the lowest
/// index is rethrown, so errors are reported deterministically.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(std::max(1u, jobs), n);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Text helpers

inline std::string format_number(double v, int precision = 9) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void check_id(const std::string& id, const std::string& what) {
  const bool bad = id.empty() || id[0] == '.' ||
                   id.find_first_of("/\\\t\n\r ,") != std::string::npos;
  if (bad) throw Error(ErrorCode::kParseError, "unusable " + what + " id '" + id + "'");
}

inline void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIoFailure, "cannot create directory " + dir.string());
  }
}

inline json parse_json_file(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Keyword files
//
// {"keywords": [{"id": "hey", "tokens": [1, 2, 3], "ctc_blank": 0,
//                "transducer_blank": 0}]}
// A bare array or a single keyword object is accepted too.

inline KeywordSpec keyword_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "keyword entry must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "tokens" && key != "ctc_blank" && key != "transducer_blank") {
      throw Error(ErrorCode::kParseError, "unknown keyword field '" + key + "'");
    }
  }
  try {
    KeywordSpec kw;
    kw.keyword_id = j.at("id").get<std::string>();
    kw.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
    kw.ctc_blank_id = j.value("ctc_blank", 0u);
    kw.transducer_blank_id = j.value("transducer_blank", 0u);
    check_id(kw.keyword_id, "keyword");
    if (kw.tokens.empty()) throw Error(ErrorCode::kInvalidKeyword, kw.keyword_id + ": no tokens");
    return kw;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("keyword entry: ") + e.what());
  }
}

inline json keyword_to_json(const KeywordSpec& kw) {
  return {{"id", kw.keyword_id},
          {"tokens", kw.tokens},
          {"ctc_blank", kw.ctc_blank_id},
          {"transducer_blank", kw.transducer_blank_id}};
}

inline std::vector<KeywordSpec> read_keywords(const fs::path& path) {
  const json j = parse_json_file(path);
  json list;
  if (j.is_array()) {
    list = j;
  } else if (j.is_object() && j.contains("keywords")) {
    list = j["keywords"];
  } else {
    list = json::array({j});
  }
  std::vector<KeywordSpec> out;
  std::set<std::string> seen;
  try {
    for (const auto& entry : list) {
      out.push_back(keyword_from_json(entry));
      if (!seen.insert(out.back().keyword_id).second) {
        throw Error(ErrorCode::kParseError, "duplicate keyword '" + out.back().keyword_id + "'");
      }
    }
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  if (out.empty()) throw Error(ErrorCode::kParseError, path.string() + ": no keywords");
  return out;
}

// ---------------------------------------------------------------------------
// Manifests: one `bundle_path<TAB>truth_record` per line, where the truth
// record is `utterance_id<TAB>duration_seconds<TAB>keywords` and may be
// omitted. Relative paths are resolved against the manifest's directory.

struct ManifestEntry {
  fs::path bundle;
  std::optional<GroundTruth> truth;
};

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto lines = read_lines(path);
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split(line, '\t');
    ManifestEntry e;
    e.bundle = fields[0];
    if (e.bundle.empty()) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(i + 1) + ": empty bundle path");
    }
    if (e.bundle.is_relative()) e.bundle = base / e.bundle;
    if (fields.size() > 1) {
      try {
        e.truth = parse_truth_fields({fields.begin() + 1, fields.end()});
      } catch (const Error& err) {
        throw Error(ErrorCode::kParseError,
                    path.string() + ":" + std::to_string(i + 1) + ": " + err.what());
      }
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyCorpus, path.string() + " lists no bundles");
  return out;
}

// ---------------------------------------------------------------------------
// Decoder flags

struct ConfigFlags {
  std::string heads = "joint";
  std::string mode = "rnnt";
  bool psd = false;
  double lambda_phi = 0.9993;
  std::string fusion = "cdc-last";
  double bonus = 1.0;
  std::uint32_t timeout = 200;
  std::uint32_t max_duration = 4;
  std::uint32_t cdc_window = 20;

  DecodeConfig build() const {
    DecodeConfig c;
    c.heads = heads == "transducer" ? Heads::kTransducerOnly
              : heads == "ctc"      ? Heads::kCtcOnly
                                    : Heads::kJoint;
    c.transducer_mode = mode == "tdt" ? TransducerMode::kTdt : TransducerMode::kRnnt;
    c.ctc_mode = psd ? CtcMode::kPsd : CtcMode::kFsd;
    if (psd) c.psd_threshold = lambda_phi;
    c.fusion = parse_fusion(fusion).value_or(FusionStrategy::kCdcLast);
    c.bonus = bonus;
    c.timeout = timeout;
    c.tdt_max_duration = max_duration;
    c.cdc_window = cdc_window;
    c.check();
    return c;
  }
};

inline void add_config_flags(CLI::App& app, ConfigFlags& f) {
  app.add_option("--heads", f.heads, "Branches to run")
      ->check(CLI::IsMember({"joint", "transducer", "ctc"}))
      ->capture_default_str();
  app.add_option("--mode", f.mode, "Transducer search mode")
      ->check(CLI::IsMember({"rnnt", "tdt"}))
      ->capture_default_str();
  app.add_flag("--psd", f.psd, "Skip CTC frames whose blank posterior reaches lambda_phi");
  app.add_option("--lambda-phi", f.lambda_phi, "CTC blank threshold for --psd")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--fusion", f.fusion, "Fusion strategy")
      ->check(CLI::IsMember({"ctc-dom", "transducer-dom", "equivalence-dom", "cdc-zero",
                             "cdc-last"}))
      ->capture_default_str();
  app.add_option("--bonus", f.bonus, "Activation bonus")->capture_default_str();
  app.add_option("--timeout", f.timeout, "Longest keyword path, in frames")
      ->capture_default_str();
  app.add_option("--max-duration", f.max_duration, "Largest TDT duration")
      ->capture_default_str();
  app.add_option("--cdc-window", f.cdc_window, "CDC similarity window, in frames")
      ->capture_default_str();
}

inline std::string pipeline_label(const DecodeConfig& c) {
  if (c.heads == Heads::kTransducerOnly) {
    return c.transducer_mode == TransducerMode::kTdt
               ? "TDT-" + std::to_string(c.tdt_max_duration)
               : "RNN-T";
  }
  if (c.heads == Heads::kCtcOnly) return c.ctc_mode == CtcMode::kPsd ? "CTC-PSD" : "CTC-FSD";
  if (c.is_frame_synchronous()) return "MFS";
  if (c.transducer_mode == TransducerMode::kTdt && c.ctc_mode == CtcMode::kPsd) return "MFA";
  return "joint";
}

// ---------------------------------------------------------------------------
// decode

struct DecodeOptions {
  std::string manifest;
  std::string keywords;
  std::string out_dir;
  ConfigFlags config;
  double threshold = 0.5;
  std::uint32_t refractory = kDefaultRefractoryFrames;
  unsigned jobs = 0;
};

inline constexpr const char* kDecodeIndex = "decode_index.tsv";
inline constexpr const char* kRunHeader = "run_header.txt";

inline std::string format_stream(const ScoreStream& stream) {
  std::string text;
  text.reserve(stream.size() * 16);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    text += std::to_string(t + 1);
    text += '\t';
    text += format_number(stream.frames[t].numeric());
    text += '\n';
  }
  return text;
}

inline std::string format_events(const std::vector<DetectionEvent>& events) {
  std::string text;
  for (const auto& e : events) {
    text += e.keyword_id + '\t' + std::to_string(e.trigger_frame) + '\t' +
            format_number(e.trigger_time, 6) + '\t' + format_number(e.peak_score) + '\n';
  }
  return text;
}

struct IndexRow {
  std::string utterance_id;
  std::string keyword_id;
  std::string stream_file;
  std::string event_file;
};

inline int cmd_decode(const DecodeOptions& o, std::ostream& out, std::ostream& err) {
  const DecodeConfig cfg = o.config.build();
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) {
    throw Error(ErrorCode::kInconsistentConfig, "threshold must lie in [0, 1]");
  }
  const auto entries = read_manifest(o.manifest);
  const auto keywords = read_keywords(o.keywords);
  const fs::path root = o.out_dir;
  make_dirs(root / "streams");
  make_dirs(root / "events");

  std::ostringstream header;
  header << "# kwsctl decode\n"
         << "pipeline\t" << pipeline_label(cfg) << '\n'
         << "config\t" << cfg.describe() << '\n'
         << "threshold\t" << format_number(o.threshold) << '\n'
         << "refractory\t" << o.refractory << '\n'
         << "utterances\t" << entries.size() << '\n'
         << "keywords\t";
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    header << (k ? "," : "") << keywords[k].keyword_id;
  }
  header << '\n';
  out << header.str();
  write_text(root / kRunHeader, header.str());

  struct Outcome {
    std::string utterance_id;
    std::vector<IndexRow> rows;
    std::vector<std::string> skipped;
  };
  std::vector<Outcome> outcomes(entries.size());
  parallel_for(entries.size(), resolve_jobs(o.jobs), [&](std::size_t i) {
    const PosteriorBundle b = load_bundle(entries[i].bundle);
    require_valid(b);
    check_id(b.utterance_id, "utterance");
    if (entries[i].truth && entries[i].truth->utterance_id != b.utterance_id) {
      throw Error(ErrorCode::kParseError, entries[i].bundle.string() + ": bundle id '" +
                                              b.utterance_id + "' differs from manifest id '" +
                                              entries[i].truth->utterance_id + "'");
    }
    Outcome& res = outcomes[i];
    res.utterance_id = b.utterance_id;
    for (const auto& kw : keywords) {
      check_keyword(kw, b.vocab_size);
      if (cfg.uses_transducer() && kw.length() + 1 != b.keyword_rows) {
        res.skipped.push_back(kw.keyword_id);
        continue;
      }
      const ScoreStream stream = decode_joint(b, kw, cfg);
      const auto events = extract_events(stream, o.threshold, o.refractory, kw.keyword_id,
                                         b.frame_hop_seconds);
      const std::string name = b.utterance_id + "." + kw.keyword_id + ".tsv";
      IndexRow row{b.utterance_id, kw.keyword_id, "streams/" + name, "events/" + name};
      write_text(root / row.stream_file, format_stream(stream));
      write_text(root / row.event_file, format_events(events));
      res.rows.push_back(std::move(row));
    }
    if (res.rows.empty()) {
      throw Error(ErrorCode::kFrameShapeMismatch,
                  entries[i].bundle.string() + ": lattice rows " +
                      std::to_string(b.keyword_rows) + " fit none of the keywords");
    }
  });

  std::set<std::string> ids;
  std::string index = "# utterance_id\tkeyword_id\tstream_file\tevent_file\n";
  std::size_t pairs = 0;
  for (const auto& res : outcomes) {
    if (!ids.insert(res.utterance_id).second) {
      throw Error(ErrorCode::kParseError, "utterance '" + res.utterance_id + "' listed twice");
    }
    for (const auto& kw : res.skipped) {
      err << "kwsctl: note: " << res.utterance_id << ": lattice does not fit keyword '" << kw
          << "', pair skipped\n";
    }
    for (const auto& r : res.rows) {
      index += r.utterance_id + '\t' + r.keyword_id + '\t' + r.stream_file + '\t' +
               r.event_file + '\n';
      ++pairs;
    }
  }
  write_text(root / kDecodeIndex, index);
  out << "decoded " << pairs << " (utterance, keyword) pairs from " << outcomes.size()
      << " utterances into " << root.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string scores_dir;
  std::string truth;
  std::vector<double> far_targets = kDefaultFarTargets;
  std::string out_file;
};

inline double stream_file_peak(const fs::path& path) {
  const auto lines = read_lines(path);
  double peak = 0.0;
  std::size_t expected = 1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = detail::split(lines[i], '\t');
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(i + 1) + ": " + why);
    };
    if (fields.size() != 2) fail("expected frame_index<TAB>score");
    std::size_t frame = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      frame = std::stoul(fields[0], &used);
      if (used != fields[0].size()) fail("bad frame index");
      score = std::stod(fields[1], &used);
      if (used != fields[1].size()) fail("bad score");
    } catch (const std::logic_error&) {
      fail("unparsable line");
    }
    if (frame != expected) fail("frame indices must run 1, 2, 3, ...");
    if (!(score >= 0.0 && score <= 1.0)) fail("score outside [0, 1]");
    ++expected;
    peak = std::max(peak, score);
  }
  return peak;
}

inline PeakScores read_scores(const fs::path& dir) {
  const fs::path index = dir / kDecodeIndex;
  const auto lines = read_lines(index);
  PeakScores peaks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 4) {
      throw Error(ErrorCode::kParseError,
                  index.string() + ":" + std::to_string(i + 1) + ": expected 4 fields");
    }
    const auto key = std::make_pair(fields[0], fields[1]);
    if (peaks.count(key)) {
      throw Error(ErrorCode::kParseError, index.string() + ": duplicate pair " + fields[0] +
                                              "/" + fields[1]);
    }
    peaks[key] = stream_file_peak(dir / fields[2]);
  }
  if (peaks.empty()) throw Error(ErrorCode::kEmptyCorpus, index.string() + " lists no streams");
  return peaks;
}

/// Every scored utterance needs truth and every truth record needs scores.
inline void check_alignment(const PeakScores& peaks, const TruthSet& truth) {
  std::set<std::string> scored;
  for (const auto& [key, _] : peaks) scored.insert(key.first);
  for (const auto& id : scored) {
    if (!truth.count(id)) throw Error(ErrorCode::kMissingTruth, "no truth for utterance " + id);
  }
  for (const auto& [id, _] : truth) {
    if (!scored.count(id)) {
      throw Error(ErrorCode::kMissingTruth, "truth lists utterance " + id + " with no scores");
    }
  }
}

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream&) {
  for (double f : o.far_targets) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw Error(ErrorCode::kInconsistentConfig, "FAR targets must be finite and >= 0");
    }
  }
  const TruthSet truth = read_truth_file(o.truth);
  if (truth.empty()) throw Error(ErrorCode::kEmptyCorpus, o.truth + " has no truth records");
  const PeakScores peaks = read_scores(o.scores_dir);
  check_alignment(peaks, truth);

  const SweepReport report = sweep(peaks, truth);
  std::ostringstream os;
  os << "# kwsctl evaluate\n"
     << "# pairs=" << peaks.size() << " utterances=" << truth.size() << '\n'
     << format_sweep_report(report, o.far_targets);
  if (o.out_file.empty()) {
    out << os.str();
  } else {
    write_text(o.out_file, os.str());
    out << "wrote " << o.out_file << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::string manifest;
  std::string keywords;
  std::string keyword_id;
  std::size_t synthetic = 0;
  std::uint32_t frames = 1000;
  std::uint64_t seed = 20240917;
  int repetitions = 3;
  std::vector<std::string> configs;
  ConfigFlags config;
  std::string out_file;
};

/// The throughput configurations with the shared flags applied.
inline std::vector<BenchConfig> bench_configs(const ConfigFlags& flags) {
  std::vector<BenchConfig> out;
  for (auto c : standard_bench_configs()) {
    c.config.bonus = flags.bonus;
    c.config.timeout = flags.timeout;
    c.config.cdc_window = flags.cdc_window;
    c.config.fusion = parse_fusion(flags.fusion).value_or(FusionStrategy::kCdcLast);
    c.config.tdt_max_duration = flags.max_duration;
    if (c.config.ctc_mode == CtcMode::kPsd) c.config.psd_threshold = flags.lambda_phi;
    c.label = pipeline_label(c.config);
    c.config.check();
    out.push_back(std::move(c));
  }
  return out;
}

inline int cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream&) {
  auto all = bench_configs(o.config);
  std::vector<BenchConfig> chosen;
  if (o.configs.empty()) {
    chosen = all;
  } else {
    for (const auto& label : o.configs) {
      auto it = std::find_if(all.begin(), all.end(),
                             [&](const BenchConfig& c) { return c.label == label; });
      if (it == all.end()) {
        std::string known;
        for (const auto& c : all) known += (known.empty() ? "" : ", ") + c.label;
        throw Error(ErrorCode::kInconsistentConfig,
                    "unknown bench config '" + label + "' (known: " + known + ")");
      }
      chosen.push_back(*it);
    }
  }
  if (o.repetitions < 1) throw Error(ErrorCode::kInconsistentConfig, "--reps must be >= 1");

  std::ostringstream head;
  BenchReport report;
  if (!o.manifest.empty()) {
    if (o.keywords.empty()) {
      throw Error(ErrorCode::kInconsistentConfig, "--manifest needs --keywords");
    }
    const auto entries = read_manifest(o.manifest);
    const auto keywords = read_keywords(o.keywords);
    const KeywordSpec* kw = &keywords.front();
    if (!o.keyword_id.empty()) {
      auto it = std::find_if(keywords.begin(), keywords.end(),
                             [&](const KeywordSpec& k) { return k.keyword_id == o.keyword_id; });
      if (it == keywords.end()) {
        throw Error(ErrorCode::kInvalidKeyword, "no keyword '" + o.keyword_id + "'");
      }
      kw = &*it;
    }
    std::vector<PosteriorBundle> corpus;
    for (const auto& e : entries) {
      corpus.push_back(load_bundle(e.bundle));
      require_valid(corpus.back());
    }
    head << "# kwsctl bench corpus=" << o.manifest << " keyword=" << kw->keyword_id << '\n';
    report = bench(corpus, *kw, chosen, o.repetitions);
  } else {
    if (o.synthetic == 0) {
      throw Error(ErrorCode::kInconsistentConfig, "bench needs --manifest or --synthetic N");
    }
    const CorpusSpec corpus = standard_speed_corpus(o.synthetic, o.frames, o.seed);
    const auto specs = corpus_specs(corpus);
    head << "# kwsctl bench corpus=synthetic utterances=" << o.synthetic
         << " frames=" << o.frames << " seed=" << o.seed << '\n';
    BenchAccumulator acc(corpus.keyword, chosen, o.repetitions);
    constexpr std::size_t kChunk = 50;
    for (std::size_t i = 0; i < specs.size(); i += kChunk) {
      std::vector<PosteriorBundle> chunk;
      for (std::size_t k = i; k < std::min(specs.size(), i + kChunk); ++k) {
        chunk.push_back(generate_utterance(specs[k]).bundle);
      }
      acc.run(chunk);
    }
    report = acc.finish();
  }
  const std::string text = head.str() + format_bench_report(report);
  if (o.out_file.empty()) {
    out << text;
  } else {
    write_text(o.out_file, text);
    out << "wrote " << o.out_file << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// generate
//
// Spec files hold either a corpus description
//   {"corpus": {"prefix": "utt", "num_utterances": 10, ..., "keyword": {...}}}
// or explicit utterances
//   {"keyword": {...}, "utterances": [{"utterance_id": "a", "num_frames": 200,
//     "plants": [{"start": 20, "dwell": [2, 3, 2]}],
//     "decoys": [{"start": 90, "dwell": [2, 2, 2], "position": 1,
//                 "replacement": 5}], ...}]}
// Plant starts are 0-based frame indices.

namespace detail {

inline void check_fields(const json& j, const std::set<std::string>& allowed,
                         const std::string& what) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidSynthSpec, what + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kInvalidSynthSpec, "unknown " + what + " field '" + key + "'");
    }
  }
}

template <class T>
void read_field(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

inline Plant plant_from_json(const json& j) {
  Plant p;
  p.start = j.at("start").get<std::uint32_t>();
  p.dwell = j.at("dwell").get<std::vector<std::uint32_t>>();
  return p;
}

inline SynthSpec utterance_from_json(const json& j, const std::optional<KeywordSpec>& kw) {
  check_fields(j,
               {"utterance_id", "num_frames", "vocab_size", "keyword", "plants", "decoys",
                "peak_prob", "blank_floor", "filler_ratio", "noise_temperature", "seed", "tdt",
                "max_duration", "duration_peak", "frame_hop_seconds"},
               "utterance");
  SynthSpec s;
  read_field(j, "utterance_id", s.utterance_id);
  read_field(j, "num_frames", s.num_frames);
  read_field(j, "vocab_size", s.vocab_size);
  if (j.contains("keyword")) {
    s.keyword = keyword_from_json(j["keyword"]);
  } else if (kw) {
    s.keyword = *kw;
  } else {
    throw Error(ErrorCode::kInvalidSynthSpec, s.utterance_id + ": no keyword");
  }
  if (j.contains("plants")) {
    for (const auto& p : j["plants"]) {
      check_fields(p, {"start", "dwell"}, "plant");
      s.plants.push_back(plant_from_json(p));
    }
  }
  if (j.contains("decoys")) {
    for (const auto& d : j["decoys"]) {
      check_fields(d, {"start", "dwell", "position", "replacement"}, "decoy");
      Decoy decoy;
      decoy.plant = plant_from_json(d);
      decoy.position = d.at("position").get<std::uint32_t>();
      decoy.replacement = d.at("replacement").get<std::uint32_t>();
      s.decoys.push_back(std::move(decoy));
    }
  }
  read_field(j, "peak_prob", s.peak_prob);
  read_field(j, "blank_floor", s.blank_floor);
  read_field(j, "filler_ratio", s.filler_ratio);
  read_field(j, "noise_temperature", s.noise_temperature);
  read_field(j, "seed", s.seed);
  read_field(j, "tdt", s.tdt);
  read_field(j, "max_duration", s.max_duration);
  read_field(j, "duration_peak", s.duration_peak);
  read_field(j, "frame_hop_seconds", s.frame_hop_seconds);
  return s;
}

inline CorpusSpec corpus_from_json(const json& j) {
  check_fields(j,
               {"prefix", "num_utterances", "positive_fraction", "num_frames", "vocab_size",
                "keyword", "min_dwell", "max_dwell", "decoys_per_utterance", "peak_prob",
                "blank_floor", "filler_ratio", "noise_temperature", "tdt", "max_duration",
                "frame_hop_seconds", "seed"},
               "corpus");
  CorpusSpec c;
  read_field(j, "prefix", c.prefix);
  read_field(j, "num_utterances", c.num_utterances);
  read_field(j, "positive_fraction", c.positive_fraction);
  read_field(j, "num_frames", c.num_frames);
  read_field(j, "vocab_size", c.vocab_size);
  if (j.contains("keyword")) c.keyword = keyword_from_json(j["keyword"]);
  read_field(j, "min_dwell", c.min_dwell);
  read_field(j, "max_dwell", c.max_dwell);
  read_field(j, "decoys_per_utterance", c.decoys_per_utterance);
  read_field(j, "peak_prob", c.peak_prob);
  read_field(j, "blank_floor", c.blank_floor);
  read_field(j, "filler_ratio", c.filler_ratio);
  read_field(j, "noise_temperature", c.noise_temperature);
  read_field(j, "tdt", c.tdt);
  read_field(j, "max_duration", c.max_duration);
  read_field(j, "frame_hop_seconds", c.frame_hop_seconds);
  read_field(j, "seed", c.seed);
  if (c.num_utterances == 0) throw Error(ErrorCode::kInvalidSynthSpec, "num_utterances is 0");
  if (!(c.positive_fraction >= 0.0 && c.positive_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidSynthSpec, "positive_fraction must lie in [0, 1]");
  }
  if (c.min_dwell < 1 || c.max_dwell < c.min_dwell) {
    throw Error(ErrorCode::kInvalidSynthSpec, "need 1 <= min_dwell <= max_dwell");
  }
  return c;
}

}  // namespace detail

/// Utterance specs described by a spec file.
inline std::vector<SynthSpec> read_synth_specs(const fs::path& path) {
  const json j = parse_json_file(path);
  try {
    detail::check_fields(j, {"corpus", "keyword", "utterances"}, "spec");
    std::vector<SynthSpec> specs;
    if (j.contains("corpus")) {
      if (j.contains("utterances")) {
        throw Error(ErrorCode::kInvalidSynthSpec, "give either corpus or utterances");
      }
      specs = corpus_specs(detail::corpus_from_json(j["corpus"]));
    } else if (j.contains("utterances")) {
      std::optional<KeywordSpec> kw;
      if (j.contains("keyword")) kw = keyword_from_json(j["keyword"]);
      for (const auto& u : j["utterances"]) specs.push_back(detail::utterance_from_json(u, kw));
    }
    if (specs.empty()) throw Error(ErrorCode::kInvalidSynthSpec, "spec describes no utterances");
    std::set<std::string> ids;
    for (const auto& s : specs) {
      check_id(s.utterance_id, "utterance");
      if (!ids.insert(s.utterance_id).second) {
        throw Error(ErrorCode::kInvalidSynthSpec, "utterance '" + s.utterance_id + "' twice");
      }
      check_synth_spec(s);
    }
    return specs;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidSynthSpec, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

struct GenerateOptions {
  std::string spec;
  std::string out_dir;
  unsigned jobs = 0;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream&) {
  const auto specs = read_synth_specs(o.spec);
  const fs::path root = o.out_dir;
  make_dirs(root);

  std::vector<GroundTruth> truth(specs.size());
  parallel_for(specs.size(), resolve_jobs(o.jobs), [&](std::size_t i) {
    auto u = generate_utterance(specs[i]);
    save_bundle(u.bundle, root / (specs[i].utterance_id + ".kpf"));
    truth[i] = std::move(u.truth);
  });

  std::string truth_text, manifest_text, plants_text;
  std::map<std::string, KeywordSpec> keywords;
  std::size_t plants = 0, decoys = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string record = format_truth_record(truth[i]);
    truth_text += record + '\n';
    manifest_text += s.utterance_id + ".kpf\t" + record + '\n';
    keywords.emplace(s.keyword.keyword_id, s.keyword);
    for (const auto& p : s.plants) {
      plants_text += s.utterance_id + '\t' + s.keyword.keyword_id + '\t' +
                     std::to_string(p.start + 1) + '\t' + std::to_string(p.start + p.length()) +
                     '\n';
    }
    plants += s.plants.size();
    decoys += s.decoys.size();
  }
  json kw_json = json::array();
  for (const auto& [_, kw] : keywords) kw_json.push_back(keyword_to_json(kw));
  write_text(root / "truth.tsv", truth_text);
  write_text(root / "manifest.tsv", manifest_text);
  write_text(root / "plants.tsv", plants_text);
  write_text(root / "keywords.json", json{{"keywords", kw_json}}.dump(2) + '\n');
  out << "generated " << specs.size() << " utterances (" << plants << " plants, " << decoys
      << " decoys) into " << root.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::uint64_t first_seed = 0;
  std::uint64_t count = 1000;
  double tolerance = 1e-9;
  RandomBundleLimits limits;
  bool inject_fault = false;
  unsigned jobs = 0;
};

inline int cmd_verify(const VerifyOptions& o, std::ostream& out, std::ostream& err) {
  if (o.limits.max_frames < 1 || o.limits.max_frames > oracle::kMaxFrames ||
      o.limits.max_keyword < 1 || o.limits.max_keyword > oracle::kMaxTokens ||
      o.limits.max_vocab < 2 || o.limits.max_duration < 1) {
    throw Error(ErrorCode::kInstanceTooLarge,
                "limits must satisfy 1 <= frames <= " + std::to_string(oracle::kMaxFrames) +
                    ", 1 <= keyword <= " + std::to_string(oracle::kMaxTokens) +
                    ", vocab >= 2, max duration >= 1");
  }
  if (!(o.tolerance >= 0.0)) throw Error(ErrorCode::kInconsistentConfig, "bad tolerance");

  std::vector<OracleCheck> checks(o.count);
  parallel_for(o.count, resolve_jobs(o.jobs), [&](std::size_t i) {
    checks[i] = check_seed(o.first_seed + i, o.limits, o.tolerance, o.inject_fault);
  });

  std::array<double, 4> worst{};
  std::vector<const OracleCheck*> failed;
  for (const auto& c : checks) {
    for (std::size_t s = 0; s < worst.size(); ++s) worst[s] = std::max(worst[s], c.worst[s]);
    if (!c.mismatches.empty()) failed.push_back(&c);
  }
  out << "# kwsctl verify seeds=" << o.first_seed << ".." << o.first_seed + o.count - 1
      << " tolerance=" << format_number(o.tolerance)
      << (o.inject_fault ? " fault=off-by-one" : "") << '\n';
  out << "suite\tworst_relative_error\n";
  for (auto s : kAllOracleSuites) {
    out << to_string(s) << '\t' << format_number(worst[static_cast<std::size_t>(s)]) << '\n';
  }
  if (failed.empty()) {
    out << "verify: " << o.count << " instances, 0 mismatches\n";
    return kExitOk;
  }
  constexpr std::size_t kShown = 10;
  for (std::size_t k = 0; k < std::min(kShown, failed.size()); ++k) {
    const auto& m = failed[k]->mismatches.front();
    err << "mismatch seed=" << m.seed << " suite=" << to_string(m.suite)
        << " frame=" << m.frame + 1 << " decoder=" << format_number(m.decoder, 17)
        << " oracle=" << format_number(m.oracle, 17)
        << " relative=" << format_number(m.relative) << '\n';
  }
  if (failed.size() > kShown) err << "... " << failed.size() - kShown << " more seeds\n";
  err << "verify: " << failed.size() << " of " << o.count << " instances mismatch; replay with "
      << "`kwsctl verify --seed " << failed.front()->seed << " --count 1"
      << (o.inject_fault ? " --inject-fault" : "") << "`\n";
  return kExitVerify;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming keyword spotting over CTC and transducer posteriors", "kwsctl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kwsctl 0.1.0");

  DecodeOptions dec;
  auto* decode = app.add_subcommand("decode", "Score every (utterance, keyword) pair");
  decode->add_option("--manifest", dec.manifest, "Corpus manifest")->required();
  decode->add_option("--keywords", dec.keywords, "Keyword JSON file")->required();
  decode->add_option("--out", dec.out_dir, "Output directory")->required();
  add_config_flags(*decode, dec.config);
  decode->add_option("--threshold", dec.threshold, "Event threshold")->capture_default_str();
  decode->add_option("--refractory", dec.refractory, "Frames suppressed after an event")
      ->capture_default_str();
  decode->add_option("--jobs", dec.jobs, "Worker threads (0: all cores)");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Recall / FAR sweep over decoded scores");
  evaluate->add_option("--scores", ev.scores_dir, "Directory written by decode")->required();
  evaluate->add_option("--truth", ev.truth, "Truth file")->required();
  evaluate->add_option("--far", ev.far_targets, "FAR targets per hour")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--out", ev.out_file, "Report file (default: stdout)");

  BenchOptions be;
  auto* benchc = app.add_subcommand("bench", "Decoding throughput relative to MFS");
  benchc->add_option("--manifest", be.manifest, "Corpus manifest");
  benchc->add_option("--keywords", be.keywords, "Keyword JSON file");
  benchc->add_option("--keyword", be.keyword_id, "Keyword id to decode (default: first)");
  benchc->add_option("--synthetic", be.synthetic, "Generate N synthetic utterances instead");
  benchc->add_option("--frames", be.frames, "Frames per synthetic utterance")
      ->capture_default_str();
  benchc->add_option("--seed", be.seed, "Synthetic corpus seed")->capture_default_str();
  benchc->add_option("--reps", be.repetitions, "Timed repetitions")->capture_default_str();
  benchc->add_option("--configs", be.configs, "Config labels to time")->delimiter(',');
  add_config_flags(*benchc, be.config);
  benchc->add_option("--out", be.out_file, "Report file (default: stdout)");

  GenerateOptions ge;
  auto* generate = app.add_subcommand("generate", "Write a synthetic corpus");
  generate->add_option("--spec", ge.spec, "Spec JSON file")->required();
  generate->add_option("--out", ge.out_dir, "Output directory")->required();
  generate->add_option("--jobs", ge.jobs, "Worker threads (0: all cores)");

  VerifyOptions ve;
  auto* verify = app.add_subcommand("verify", "Check the searches against exhaustive scorers");
  verify->add_option("--seed", ve.first_seed, "First seed")->capture_default_str();
  verify->add_option("--count", ve.count, "Number of seeds")->capture_default_str();
  verify->add_option("--tolerance", ve.tolerance, "Relative tolerance")->capture_default_str();
  verify->add_option("--max-frames", ve.limits.max_frames)->capture_default_str();
  verify->add_option("--max-keyword", ve.limits.max_keyword)->capture_default_str();
  verify->add_option("--max-vocab", ve.limits.max_vocab)->capture_default_str();
  verify->add_option("--max-duration", ve.limits.max_duration)->capture_default_str();
  verify->add_flag("--inject-fault", ve.inject_fault,
                   "Shift decoder scores by one frame; verification must fail");
  verify->add_option("--jobs", ve.jobs, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*decode) return cmd_decode(dec, out, err);
    if (*evaluate) return cmd_evaluate(ev, out, err);
    if (*benchc) return cmd_bench(be, out, err);
    if (*generate) return cmd_generate(ge, out, err);
    if (*verify) return cmd_verify(ve, out, err);
  } catch (const Error& e) {
    err << "kwsctl: error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "kwsctl: error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace kws::cli
