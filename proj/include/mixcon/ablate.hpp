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


// Ablation grids: train every cell for every seed, evaluate every scheme.

#ifndef MIXCON_ABLATE_HPP_
#define MIXCON_ABLATE_HPP_

#include "mixcon/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mixcon {

struct AblationCell {
  std::string name;
  TrainConfig train;
};

// "trend": baseline vs full. "table3": loss and multi-view flags.
// "table4": fusion variants. "table6": full method only, every scheme.
// "adapter": projection head scope. Cells start from `base`.
std::vector<AblationCell> ablation_grid(const std::string& grid,
                                        const TrainConfig& base);
std::vector<std::string> ablation_grid_names();

// Point-image and point-text terms with one view per object.
TrainConfig baseline_config(TrainConfig base);
// All four terms with four views.
TrainConfig full_config(TrainConfig base);

struct AblationData {
  const PreparedSplit* train = nullptr;
  std::vector<EvalTarget> evals;
};

struct AblationRow {
  std::string cell;
  std::string seed;  // "median" on summary rows
  std::string split;
  std::string scheme;
  double top1 = 0, top1c = 0, top3 = 0, top5 = 0;
};

using TrainedHook = std::function<void(const AblationCell&, const TrainConfig&,
                                        const TrainResult&)>;

// Seeds are first_seed, first_seed + 1, ... Per-run metrics land in
// run_dir/<cell>_s<seed>.jsonl when run_dir is set.
std::vector<AblationRow> run_ablation(
    const std::vector<AblationCell>& cells, std::uint64_t first_seed,
    int seeds, const AblationData& data,
    const std::optional<std::filesystem::path>& run_dir = std::nullopt,
    const TrainedHook& on_trained = nullptr);

// Appends one median row per (cell, split, scheme).
std::vector<AblationRow> with_medians(std::vector<AblationRow> rows);

double median(std::vector<double> v);

std::string ablation_csv(const std::vector<AblationRow>& rows);

// Median top1 of the summary row, if present.
std::optional<double> median_top1(const std::vector<AblationRow>& rows,
                                  const std::string& cell,
                                  const std::string& split,
                                  const std::string& scheme);

}  // namespace mixcon

#endif  // MIXCON_ABLATE_HPP_
