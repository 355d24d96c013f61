// Copyright 2026 The anicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

namespace anicl {

// Splittable counter-seeded generator. A stream is fully identified by
// (seed, stream_id): the xoshiro256++ state is derived from both through
// SplitMix64, so distinct stream ids give statistically independent
// sequences and the same pair replays the same sequence on any platform.
// All floating point draws use explicit integer-to-double conversions and
// libm only (no std::<distribution>, whose output is implementation
// defined).
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Fresh stream with the same seed; `salt` is folded into the stream id.
  RngStream substream(std::uint64_t salt) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform();
  // Uniform on (lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via the Marsaglia polar method.
  double normal();
  // Gamma(shape, 1), shape > 0, Marsaglia-Tsang.
  double gamma(double shape);
  // Beta(a, b).
  double beta(double a, double b);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t s_[4] = {0, 0, 0, 0};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace anicl
