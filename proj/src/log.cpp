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

#include "mixcon/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mixcon {
namespace {

std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
std::mutex g_mu;

}  // namespace

void log_info(std::string_view msg) {
  if (g_quiet) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "[mixcon] " << msg << '\n';
}

void log_warning(std::string_view msg) {
  ++g_warnings;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "[mixcon] warning: " << msg << '\n';
}

std::size_t warning_count() { return g_warnings; }

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace mixcon
