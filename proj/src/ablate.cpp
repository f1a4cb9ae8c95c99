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


#include "mixcon/ablate.hpp"

#include "mixcon/binio.hpp"
#include "mixcon/log.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mixcon {

TrainConfig baseline_config(TrainConfig base) {
  base.flags = LossFlags::baseline();
  base.views_train = 1;
  return base;
}

TrainConfig full_config(TrainConfig base) {
  base.flags = LossFlags::full();
  base.model.sculptor = true;
  base.views_train = 4;
  return base;
}

std::vector<std::string> ablation_grid_names() {
  return {"trend", "table3", "table4", "table6", "adapter"};
}

std::vector<AblationCell> ablation_grid(const std::string& grid,
                                        const TrainConfig& base) {
  const TrainConfig b = baseline_config(base);
  const TrainConfig f = full_config(base);
  if (grid == "trend") return {{"baseline", b}, {"full", f}};
  if (grid == "table3") {
    auto it = b, d3 = b, mv = b, both = b;
    it.flags.i_t = true;
    d3.flags.d3_t = true;
    mv.views_train = 4;
    both.flags.i_t = both.flags.d3_t = true;
    return {{"baseline", b}, {"+it", it},           {"+3dt", d3},
            {"+mv", mv},     {"+it+3dt", both},     {"full", f}};
  }
  if (grid == "table4") {
    std::vector<AblationCell> cells;
    for (FusionMode m : {FusionMode::kViewPool, FusionMode::kViewPoolFc,
                         FusionMode::kMaxPool, FusionMode::kMaxPoolFc}) {
      auto c = f;
      c.model.fusion = m;
      cells.push_back({std::string(to_string(m)), c});
    }
    return cells;
  }
  if (grid == "table6") return {{"full", f}};
  if (grid == "adapter") {
    auto a = f, g = f;
    a.model.adapter_scope = AdapterScope::kClipOnly;
    g.model.adapter_scope = AdapterScope::kAllImage;
    return {{"clip_only", a}, {"all_image", g}};
  }
  std::string names;
  for (const auto& n : ablation_grid_names()) names += " " + n;
  throw ConfigError("unknown ablation grid '" + grid + "' (known:" + names + ")");
}

std::vector<AblationRow> run_ablation(
    const std::vector<AblationCell>& cells, std::uint64_t first_seed,
    int seeds, const AblationData& data,
    const std::optional<std::filesystem::path>& run_dir,
    const TrainedHook& on_trained) {
  if (seeds < 1) throw ConfigError("ablation: seeds must be >= 1");
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    for (int k = 0; k < seeds; ++k) {
      TrainConfig cfg = cell.train;
      cfg.seed = first_seed + static_cast<std::uint64_t>(k);
      log_info("ablation cell " + cell.name + " seed " +
               std::to_string(cfg.seed));
      std::ofstream metrics;
      if (run_dir) {
        metrics.open(*run_dir / (cell.name + "_s" + std::to_string(cfg.seed) +
                                 ".jsonl"));
        if (!metrics) throw IoError("cannot write ablation metrics");
      }
      const auto res =
          train(cfg, *data.train, {}, run_dir ? &metrics : nullptr);
      if (on_trained) on_trained(cell, cfg, res);
      const auto w = cfg.use_ema ? ema_weights(res.ema) : res.params;
      for (const auto& t : data.evals) {
        for (Scheme s : kAllSchemes) {
          if (s != Scheme::kPoint && !t.split->has_views()) continue;
          if (s == Scheme::kFusion && !cfg.model.sculptor) continue;
          const int m = std::min(cfg.eval_views, t.split->views_stored);
          const auto r = evaluate(w, cfg.model, *t.split, *t.bank, s, m);
          rows.push_back({cell.name, std::to_string(cfg.seed), r.split,
                          r.scheme, r.top1, r.top1c, r.top3, r.top5});
        }
      }
    }
  }
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<AblationRow> with_medians(std::vector<AblationRow> rows) {
  // keep first-seen order of (cell, split, scheme)
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>,
           std::array<std::vector<double>, 4>>
      groups;
  for (const auto& r : rows) {
    if (r.seed == "median") continue;
    auto key = std::make_tuple(r.cell, r.split, r.scheme);
    if (!groups.count(key)) order.push_back(key);
    auto& g = groups[key];
    g[0].push_back(r.top1);
    g[1].push_back(r.top1c);
    g[2].push_back(r.top3);
    g[3].push_back(r.top5);
  }
  for (const auto& key : order) {
    const auto& g = groups.at(key);
    rows.push_back({std::get<0>(key), "median", std::get<1>(key),
                    std::get<2>(key), median(g[0]), median(g[1]),
                    median(g[2]), median(g[3])});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "cell,seed,split,scheme,top1,top1c,top3,top5\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.cell << ',' << r.seed << ',' << r.split << ',' << r.scheme << ','
        << r.top1 << ',' << r.top1c << ',' << r.top3 << ',' << r.top5 << '\n';
  }
  return out.str();
}

std::optional<double> median_top1(const std::vector<AblationRow>& rows,
                                  const std::string& cell,
                                  const std::string& split,
                                  const std::string& scheme) {
  for (const auto& r : rows) {
    if (r.seed == "median" && r.cell == cell && r.split == split &&
        r.scheme == scheme) {
      return r.top1;
    }
  }
  return std::nullopt;
}

}  // namespace mixcon
