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


// Run configuration: a sectioned key = value text file.
//
//   [train]
//   epochs = 30
//   model.fusion = view_pool   # dotted keys work anywhere
//
// '#' and ';' start comments.

#ifndef MIXCON_CONFIG_HPP_
#define MIXCON_CONFIG_HPP_

#include "mixcon/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mixcon {

struct EvalOptions {
  Split split = Split::kEvalZeroShot;
  Scheme scheme = Scheme::kPoint;
  int views = 4;
  int k = 5;
};

struct AblateOptions {
  std::string grid = "trend";
  int seeds = 5;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  SynthConfig data;
  TeacherSpec teacher;
  TrainConfig train;
  EvalOptions eval;
  AblateOptions ablate;

  // Copies the run seed and embedding width into the nested configs.
  void resolve();
  void validate() const;
};

// Full "section.key" names in dump order.
std::vector<std::string> config_keys();

void set_config_value(RunConfig& cfg, const std::string& key,
                      const std::string& value);

// Later assignments win. Unknown keys throw ConfigError naming the key.
void apply_config_text(RunConfig& cfg, std::string_view text,
                       const std::string& origin);
RunConfig load_config(const std::filesystem::path& path);

// Every key, canonical formatting; parses back to the same config.
std::string dump_config(const RunConfig& cfg);

Digest config_digest(const RunConfig& cfg);

}  // namespace mixcon

#endif  // MIXCON_CONFIG_HPP_
