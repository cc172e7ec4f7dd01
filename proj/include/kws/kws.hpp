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

#pragma once

#include "kws/bench.hpp"
#include "kws/common.hpp"
#include "kws/ctc_search.hpp"
#include "kws/detection.hpp"
#include "kws/fusion.hpp"
#include "kws/joint_decoder.hpp"
#include "kws/kpf.hpp"
#include "kws/oracle.hpp"
#include "kws/posterior.hpp"
#include "kws/synth.hpp"
#include "kws/transducer_search.hpp"
#include "kws/verify.hpp"
