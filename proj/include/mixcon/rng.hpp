// Copyright 2026 The mixcon Authors.
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

#ifndef MIXCON_RNG_HPP_
#define MIXCON_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace mixcon {

using Rng = std::mt19937_64;

// Disjoint seeded streams. Every random draw in the project is keyed by
// (run seed, stream, index...) so that independent consumers never share
// engine state.
enum class Stream : std::uint64_t {
  kCategories = 1,
  kObject = 2,
  kSurface = 3,
  kRender = 4,
  kColor = 5,
  kTeacherImage = 6,
  kTeacherToken = 7,
  kCodeBook = 8,
  kInit = 9,
  kBatchOrder = 10,
  kViewSubsample = 11,
  kGradCheck = 12,
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(base);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ a);
  return mix64(h ^ b);
}

inline Rng make_rng(std::uint64_t base, Stream stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(base, stream, a, b));
}

// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mixcon

#endif  // MIXCON_RNG_HPP_
