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

// KPF v1 posterior files and the JSON fixture format.
//
// KPF v1, little-endian:
//   char[4] "KPF1"
//   u32 version (=1), u32 T, u32 U+1, u32 V, u32 D (=D_max+1, 0 if absent)
//   u32 flags   bit0 transducer | bit1 duration | bit2 ctc | bit3 TDT mode
//   u32 ctc_blank_id, u32 transducer_blank_id
//   f32 frame_hop_seconds
//   f32 arrays, row-major, in order transducer, duration, ctc (flagged only)
//
// The utterance id is not stored; loaders take it from the file stem.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "kws/common.hpp"
#include "kws/posterior.hpp"

namespace kws {

inline constexpr char kKpfMagic[4] = {'K', 'P', 'F', '1'};
inline constexpr std::uint32_t kKpfVersion = 1;
inline constexpr std::size_t kKpfHeaderBytes = 4 + 8 * 4 + 4;

enum KpfFlags : std::uint32_t {
  kKpfHasTransducer = 1u << 0,
  kKpfHasDuration = 1u << 1,
  kKpfHasCtc = 1u << 2,
  kKpfTdtMode = 1u << 3,
};

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap32(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    if constexpr (std::endian::native == std::endian::big) v = byteswap32(v);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  std::vector<float> floats(std::size_t n) {
    std::vector<float> out(n);
    for (auto& f : out) f = f32();
    return out;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes a bundle as KPF v1 bytes. Validates first; invalid bundles
/// (NaN, non-stochastic rows, ...) never reach the encoder.
inline std::string encode_kpf(const PosteriorBundle& b) {
  require_valid(b);
  std::uint32_t flags = 0;
  if (b.has_transducer()) flags |= kKpfHasTransducer;
  if (b.has_duration()) flags |= kKpfHasDuration;
  if (b.has_ctc()) flags |= kKpfHasCtc;
  if (b.tdt) flags |= kKpfTdtMode;

  std::string out;
  out.reserve(kKpfHeaderBytes +
              4 * (b.transducer.size() + b.duration.size() + b.ctc.size()));
  out.append(kKpfMagic, 4);
  detail::put_u32(out, kKpfVersion);
  detail::put_u32(out, b.num_frames);
  detail::put_u32(out, b.keyword_rows);
  detail::put_u32(out, b.vocab_size);
  detail::put_u32(out, b.has_duration() ? b.duration_size : 0);
  detail::put_u32(out, flags);
  detail::put_u32(out, b.ctc_blank_id);
  detail::put_u32(out, b.transducer_blank_id);
  detail::put_f32(out, b.frame_hop_seconds);
  for (float f : b.transducer) detail::put_f32(out, f);
  for (float f : b.duration) detail::put_f32(out, f);
  for (float f : b.ctc) detail::put_f32(out, f);
  return out;
}

/// Decodes and validates KPF v1 bytes.
inline PosteriorBundle decode_kpf(std::string_view bytes, std::string utterance_id = {}) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kKpfMagic, 4) != 0) {
    throw Error(ErrorCode::kMagicMismatch, "missing KPF1 magic");
  }
  if (bytes.size() < kKpfHeaderBytes) {
    throw Error(ErrorCode::kTruncatedTensor,
                "header needs " + std::to_string(kKpfHeaderBytes) + " bytes, file has " +
                    std::to_string(bytes.size()));
  }
  detail::ByteReader in(bytes.substr(4));
  const std::uint32_t version = in.u32();
  if (version != kKpfVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "KPF version " + std::to_string(version));
  }
  PosteriorBundle b;
  b.utterance_id = std::move(utterance_id);
  b.num_frames = in.u32();
  b.keyword_rows = in.u32();
  b.vocab_size = in.u32();
  const std::uint32_t dsize = in.u32();
  const std::uint32_t flags = in.u32();
  b.ctc_blank_id = in.u32();
  b.transducer_blank_id = in.u32();
  b.frame_hop_seconds = in.f32();
  b.tdt = (flags & kKpfTdtMode) != 0;

  if (flags & ~std::uint32_t{0xf}) {
    throw Error(ErrorCode::kInvalidBundle, "unknown KPF flag bits");
  }
  if (b.tdt && !(flags & kKpfHasDuration)) {
    throw Error(ErrorCode::kMissingDurationForTDT,
                "TDT-flagged file carries no duration matrix");
  }
  if ((flags & kKpfHasDuration) && dsize < 2) {
    throw Error(ErrorCode::kInvalidBundle, "duration flag set with D < 2");
  }
  b.duration_size = (flags & kKpfHasDuration) ? dsize : 0;

  const std::uint64_t T = b.num_frames;
  const std::uint64_t n_trans =
      (flags & kKpfHasTransducer) ? T * b.keyword_rows * b.vocab_size : 0;
  const std::uint64_t n_dur = (flags & kKpfHasDuration) ? T * b.duration_size : 0;
  const std::uint64_t n_ctc = (flags & kKpfHasCtc) ? T * b.vocab_size : 0;
  const std::uint64_t need = 4 * (n_trans + n_dur + n_ctc);
  if (in.remaining() < need) {
    throw Error(ErrorCode::kTruncatedTensor,
                "payload needs " + std::to_string(need) + " bytes, file has " +
                    std::to_string(in.remaining()));
  }
  if (in.remaining() > need) {
    throw Error(ErrorCode::kInvalidBundle,
                std::to_string(in.remaining() - need) + " trailing bytes after payload");
  }
  b.transducer = in.floats(n_trans);
  b.duration = in.floats(n_dur);
  b.ctc = in.floats(n_ctc);
  require_valid(b);
  return b;
}

// ---------------------------------------------------------------------------
// JSON fixtures: same fields, tensors as nested arrays.

inline nlohmann::json bundle_to_json(const PosteriorBundle& b) {
  nlohmann::json j;
  j["utterance_id"] = b.utterance_id;
  j["num_frames"] = b.num_frames;
  j["keyword_rows"] = b.keyword_rows;
  j["vocab_size"] = b.vocab_size;
  j["tdt"] = b.tdt;
  j["ctc_blank_id"] = b.ctc_blank_id;
  j["transducer_blank_id"] = b.transducer_blank_id;
  j["frame_hop_seconds"] = b.frame_hop_seconds;
  if (b.has_transducer()) {
    auto& arr = j["transducer"] = nlohmann::json::array();
    for (std::size_t t = 0; t < b.num_frames; ++t) {
      auto frame = nlohmann::json::array();
      for (std::size_t u = 0; u < b.keyword_rows; ++u) {
        auto row = b.transducer_row(t, u);
        frame.push_back(std::vector<float>(row.begin(), row.end()));
      }
      arr.push_back(std::move(frame));
    }
  }
  if (b.has_duration()) {
    auto& arr = j["duration"] = nlohmann::json::array();
    for (std::size_t t = 0; t < b.num_frames; ++t) {
      auto row = b.duration_row(t);
      arr.push_back(std::vector<float>(row.begin(), row.end()));
    }
  }
  if (b.has_ctc()) {
    auto& arr = j["ctc"] = nlohmann::json::array();
    for (std::size_t t = 0; t < b.num_frames; ++t) {
      auto row = b.ctc_row(t);
      arr.push_back(std::vector<float>(row.begin(), row.end()));
    }
  }
  return j;
}

inline PosteriorBundle bundle_from_json(const nlohmann::json& j) {
  PosteriorBundle b;
  try {
    b.utterance_id = j.value("utterance_id", std::string{});
    b.num_frames = j.at("num_frames").get<std::uint32_t>();
    b.keyword_rows = j.at("keyword_rows").get<std::uint32_t>();
    b.vocab_size = j.at("vocab_size").get<std::uint32_t>();
    b.tdt = j.value("tdt", false);
    b.ctc_blank_id = j.value("ctc_blank_id", 0u);
    b.transducer_blank_id = j.value("transducer_blank_id", 0u);
    b.frame_hop_seconds = j.value("frame_hop_seconds", 0.03f);

    auto flatten_rows = [&](const nlohmann::json& rows, std::size_t width,
                            const char* name) {
      std::vector<float> out;
      for (const auto& row : rows) {
        if (row.size() != width) {
          throw Error(ErrorCode::kInvalidBundle,
                      std::string(name) + " row has " + std::to_string(row.size()) +
                          " entries, expected " + std::to_string(width));
        }
        for (const auto& v : row) out.push_back(v.get<float>());
      }
      return out;
    };

    if (j.contains("transducer")) {
      const auto& frames = j.at("transducer");
      if (frames.size() != b.num_frames) {
        throw Error(ErrorCode::kTruncatedTensor, "transducer has " +
                                                     std::to_string(frames.size()) +
                                                     " frames, expected " +
                                                     std::to_string(b.num_frames));
      }
      for (const auto& frame : frames) {
        if (frame.size() != b.keyword_rows) {
          throw Error(ErrorCode::kInvalidBundle, "transducer frame has wrong row count");
        }
        auto flat = flatten_rows(frame, b.vocab_size, "transducer");
        b.transducer.insert(b.transducer.end(), flat.begin(), flat.end());
      }
    }
    if (j.contains("duration")) {
      const auto& rows = j.at("duration");
      if (rows.size() != b.num_frames) {
        throw Error(ErrorCode::kTruncatedTensor, "duration matrix has wrong frame count");
      }
      b.duration_size = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.front().size());
      b.duration = flatten_rows(rows, b.duration_size, "duration");
    }
    if (j.contains("ctc")) {
      const auto& rows = j.at("ctc");
      if (rows.size() != b.num_frames) {
        throw Error(ErrorCode::kTruncatedTensor, "ctc matrix has wrong frame count");
      }
      b.ctc = flatten_rows(rows, b.vocab_size, "ctc");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  if (b.tdt && !b.has_duration()) {
    throw Error(ErrorCode::kMissingDurationForTDT,
                "TDT-flagged fixture carries no duration matrix");
  }
  require_valid(b);
  return b;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Loads a KPF file or a JSON fixture (detected by content) and validates it.
inline PosteriorBundle load_bundle(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kKpfMagic, 4) == 0) {
    return decode_kpf(bytes, path.stem().string());
  }
  const auto first = bytes.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && bytes[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
    }
    auto b = bundle_from_json(j);
    if (b.utterance_id.empty()) b.utterance_id = path.stem().string();
    return b;
  }
  throw Error(ErrorCode::kMagicMismatch,
              path.string() + " is neither a KPF1 file nor a JSON fixture");
}

inline void save_bundle(const PosteriorBundle& b, const std::filesystem::path& path) {
  const std::string bytes = encode_kpf(b);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

}  // namespace kws
