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


// Finite-difference check of the full objective on a random batch.

#ifndef MIXCON_LOSSCHECK_HPP_
#define MIXCON_LOSSCHECK_HPP_

#include "mixcon/gradcheck.hpp"
#include "mixcon/losses.hpp"

namespace mixcon {

struct LossCheckSpec {
  int batch = 4;
  int embed_dim = 8;
  int points = 16;
  int views = 2;
  std::vector<int> point_widths = {16, 32};
  int post_width = 32;
  FusionMode fusion = FusionMode::kViewPoolFc;
  AdapterScope adapter_scope = AdapterScope::kClipOnly;
  double eps = 1e-5;
  std::uint64_t seed = 1;
  std::size_t max_coords_per_tensor = 0;  // 0 checks every coordinate
};

// Parameters are moved off the identity/averaging inits and the encoder
// biases are redrawn until no ReLU input lies within 2 eps of its kink.
GradCheckResult check_loss_gradients(const LossCheckSpec& spec);

}  // namespace mixcon

#endif  // MIXCON_LOSSCHECK_HPP_
