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

#ifndef MIXCON_PARALLEL_HPP_
#define MIXCON_PARALLEL_HPP_

namespace mixcon {

// Worker cap: MIXCON_THREADS when set to a positive integer, otherwise the
// machine's core count.
int worker_threads();

// Applies worker_threads() to OpenMP and Eigen. Called once by entrypoints.
void configure_threads();

}  // namespace mixcon

#endif  // MIXCON_PARALLEL_HPP_
