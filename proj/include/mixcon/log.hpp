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

#ifndef MIXCON_LOG_HPP_
#define MIXCON_LOG_HPP_

#include <cstddef>
#include <string_view>

namespace mixcon {

// Diagnostics go to stderr; data never does.
void log_info(std::string_view msg);
void log_warning(std::string_view msg);

// Number of warnings emitted so far in this process.
std::size_t warning_count();

void set_quiet(bool quiet);

}  // namespace mixcon

#endif  // MIXCON_LOG_HPP_
