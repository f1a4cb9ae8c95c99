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

// Zero-shot classification, scoring and text-to-shape retrieval.

#ifndef MIXCON_EVAL_HPP_
#define MIXCON_EVAL_HPP_

#include "mixcon/model.hpp"
#include "mixcon/synthgen.hpp"
#include "mixcon/teacher.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixcon {

// A scheme needs data the dataset does not have.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme : std::uint8_t { kPoint, kImage, kFusion, kEnsemble };
inline constexpr std::array<Scheme, 4> kAllSchemes = {
    Scheme::kPoint, Scheme::kImage, Scheme::kFusion, Scheme::kEnsemble};
std::string_view to_string(Scheme s);
Scheme scheme_from_string(std::string_view s);

std::vector<std::string> default_prompt_templates();

struct ClassBank {
  std::vector<std::uint32_t> category_ids;
  std::vector<std::string> names;
  std::vector<std::string> templates;
  Mat<float> embeddings;  // C x D unit rows
};

ClassBank build_class_bank(const std::vector<std::uint32_t>& category_ids,
                           const std::vector<std::string>& names,
                           const std::vector<std::string>& templates,
                           const Teacher& teacher);

// Bank over the categories whose home is the split's home.
ClassBank class_bank_for_split(const DatasetManifest& m, Split split,
                               const Teacher& teacher,
                               const std::vector<std::string>& templates =
                                   default_prompt_templates());

// A split with its frozen-teacher embeddings computed once.
struct PreparedSplit {
  Split split = Split::kTrain;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> captions;
  Mat<float> points;  // (n * P) x 6
  int points_per_object = 0;
  std::optional<Mat<float>> view_embeds;  // (n * M_stored) x D
  int views_stored = 0;
  Mat<float> text;  // n x D

  std::size_t size() const { return labels.size(); }
  bool has_views() const { return view_embeds.has_value(); }
};

PreparedSplit prepare_split(const SplitData& data, const DatasetManifest& m,
                            const Teacher& teacher);

// Indices of M evenly spaced stored views.
std::vector<int> eval_view_indices(int stored, int m);

struct ObjectEmbeddings {
  Mat<float> point;                 // z^P
  std::optional<Mat<float>> image;  // fused z^I (adapted under all_image)
  std::optional<Mat<float>> joint;  // z^3D
  int views_used = 0;
};

// m_eval = 0 skips the image path even when views exist.
ObjectEmbeddings embed_objects(const ParamStore<float>& params,
                               const ModelConfig& cfg, const PreparedSplit& s,
                               int m_eval);

// n x C scores without any temperature.
Mat<float> zero_shot_logits(const ObjectEmbeddings& e, const ClassBank& bank,
                            Scheme scheme);

struct CategoryScore {
  std::uint32_t id = 0;
  std::string name;
  std::size_t count = 0;
  double top1 = 0.0;
};

struct EvalReport {
  std::string scheme;
  std::string split;
  int m_eval = 0;
  std::size_t objects = 0;
  double top1 = 0.0, top1c = 0.0, top3 = 0.0, top5 = 0.0;
  std::vector<CategoryScore> per_category;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  nlohmann::json to_json() const;
};

// labels index rows of the bank. Ties rank the lower category first.
EvalReport score(const Mat<float>& logits,
                 const std::vector<std::size_t>& labels,
                 const ClassBank& bank);

// Position of the bank row for every object label.
std::vector<std::size_t> bank_labels(const ClassBank& bank,
                                     const std::vector<std::uint32_t>& labels);

EvalReport evaluate(const ParamStore<float>& params, const ModelConfig& cfg,
                    const PreparedSplit& s, const ClassBank& bank,
                    Scheme scheme, int m_eval);

// Object ids by descending cosine, ties to the lower id. At most k.
std::vector<std::size_t> retrieve(const RowF& query, const Mat<float>& index,
                                  std::size_t k);

// Mean number of the top-k objects retrieved for each caption of the split
// that share the caption's category. Chance is k / C.
double class_match_at_k(const ObjectEmbeddings& e, const PreparedSplit& s,
                        Scheme scheme, std::size_t k);

}  // namespace mixcon

#endif  // MIXCON_EVAL_HPP_
