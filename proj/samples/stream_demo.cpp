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


// Streams one synthetic utterance through the MFA decoder frame by frame
// and prints the frames where the keyword fires.

#include <iomanip>
#include <iostream>

#include "kws/kws.hpp"

int main() {
  kws::SynthSpec spec;
  spec.utterance_id = "demo";
  spec.num_frames = 300;
  spec.vocab_size = 10;
  spec.keyword = {"hey", {1, 2, 3}, 0, 0};
  spec.plants.push_back({120, {3, 2, 4}});
  spec.filler_ratio = 0.3;
  spec.seed = 42;
  const auto utt = kws::generate_utterance(spec);
  const auto& b = utt.bundle;

  const auto cfg = kws::DecodeConfig::mfa();
  auto session = kws::open_session(spec.keyword, cfg, b.vocab_size);
  std::vector<double> scores;
  for (std::size_t t = 0; t < b.num_frames; ++t) {
    scores.push_back(session.push_frame(b.transducer_frame(t), b.duration_row(t), b.ctc_row(t)));
  }

  const auto c = session.counters();
  std::cout << cfg.describe() << '\n'
            << "frames " << c.frames << ", transducer updates " << c.transducer_updates
            << ", ctc updates " << c.ctc_updates << '\n';
  for (const auto& e : kws::extract_events(scores, 0.5, 60, "hey", b.frame_hop_seconds)) {
    std::cout << "event " << e.keyword_id << " at frame " << e.trigger_frame << " ("
              << std::fixed << std::setprecision(2) << e.trigger_time << " s), peak "
              << std::setprecision(3) << e.peak_score << '\n';
  }
  return 0;
}
