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

#include "mixcon/eval.hpp"

#include <algorithm>
#include <numeric>

namespace mixcon {
namespace {

constexpr std::array<std::string_view, 4> kSchemeNames = {"point", "image",
                                                          "fusion", "ensemble"};
constexpr Eigen::Index kChunk = 256;

bool needs_views(Scheme s) { return s != Scheme::kPoint; }

}  // namespace

std::string_view to_string(Scheme s) {
  return kSchemeNames.at(static_cast<std::size_t>(s));
}

Scheme scheme_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSchemeNames.size(); ++i) {
    if (kSchemeNames[i] == s) return static_cast<Scheme>(i);
  }
  throw ConfigError("unknown scheme '" + std::string(s) + "'");
}

std::vector<std::string> default_prompt_templates() {
  return {"a 3D model of a {}", "a point cloud of a {}", "a {}",
          "an object shaped like a {}"};
}

ClassBank build_class_bank(const std::vector<std::uint32_t>& category_ids,
                           const std::vector<std::string>& names,
                           const std::vector<std::string>& templates,
                           const Teacher& teacher) {
  if (templates.empty()) throw ConfigError("class bank: no templates");
  if (names.size() != category_ids.size() || names.empty()) {
    throw ConfigError("class bank: need one name per category");
  }
  ClassBank bank;
  bank.category_ids = category_ids;
  bank.names = names;
  bank.templates = templates;
  bank.embeddings.resize(static_cast<Eigen::Index>(names.size()),
                         teacher.embed_dim());
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (tokenize(names[c]).empty()) {
      throw ConfigError("class bank: empty category name");
    }
    std::vector<std::string> prompts;
    for (const auto& t : templates) {
      std::string p = t;
      const auto at = p.find("{}");
      if (at == std::string::npos) {
        throw ConfigError("class bank: template without {}: " + t);
      }
      p.replace(at, 2, names[c]);
      prompts.push_back(std::move(p));
    }
    const RowF mean = teacher.embed_texts(prompts).colwise().mean();
    bank.embeddings.row(static_cast<Eigen::Index>(c)) = mean / mean.norm();
  }
  return bank;
}

ClassBank class_bank_for_split(const DatasetManifest& m, Split split,
                               const Teacher& teacher,
                               const std::vector<std::string>& templates) {
  const Split home =
      split == Split::kEvalZeroShot ? Split::kEvalZeroShot : Split::kTrain;
  const auto ids = m.category_ids(home);
  const auto all = m.category_names();
  std::vector<std::string> names;
  for (auto id : ids) names.push_back(all[id]);
  return build_class_bank(ids, names, templates, teacher);
}

PreparedSplit prepare_split(const SplitData& data, const DatasetManifest& m,
                            const Teacher& teacher) {
  PreparedSplit s;
  s.split = data.split;
  s.labels = data.labels;
  s.captions = data.captions;
  s.points = data.points;
  s.points_per_object = m.points;
  s.views_stored = m.views;
  if (data.has_views()) s.view_embeds = teacher.embed_images(*data.views);
  s.text = teacher.embed_texts(data.captions);
  return s;
}

std::vector<int> eval_view_indices(int stored, int m) {
  if (m < 1 || m > stored) {
    throw ConfigError("views: need 1 <= M <= " + std::to_string(stored));
  }
  std::vector<int> idx;
  for (int k = 0; k < m; ++k) idx.push_back(k * stored / m);
  return idx;
}

ObjectEmbeddings embed_objects(const ParamStore<float>& params,
                               const ModelConfig& cfg, const PreparedSplit& s,
                               int m_eval) {
  const auto n = static_cast<Eigen::Index>(s.size());
  const Eigen::Index d = cfg.embed_dim;
  const Eigen::Index p = s.points_per_object;
  const bool images = m_eval > 0 && s.has_views();
  const std::vector<int> views =
      images ? eval_view_indices(s.views_stored, m_eval) : std::vector<int>{};
  const auto m = static_cast<Eigen::Index>(views.size());

  ObjectEmbeddings out;
  out.point.resize(n, d);
  if (images) {
    out.image = Mat<float>(n, d);
    if (cfg.sculptor) out.joint = Mat<float>(n, d);
    out.views_used = m_eval;
  }
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    Tape<float> tape;
    tape.set_check_finite(false);
    const auto pv = bind_params(tape, params, false);
    Var<float> zp = encode_points(
        pv, cfg, tape.constant(s.points.middleRows(start * p, len * p)), p);
    out.point.middleRows(start, len) = zp.value();
    if (!images) continue;
    Mat<float> v(len * m, d);
    for (Eigen::Index o = 0; o < len; ++o) {
      for (Eigen::Index k = 0; k < m; ++k) {
        v.row(o * m + k) =
            s.view_embeds->row((start + o) * s.views_stored + views[k]);
      }
    }
    Var<float> zi = fuse_views(pv, cfg.fusion, tape.constant(std::move(v)), m);
    if (cfg.adapter_scope == AdapterScope::kAllImage) zi = adapt(pv, zi);
    out.image->middleRows(start, len) = zi.value();
    if (cfg.sculptor) out.joint->middleRows(start, len) = sculpt(pv, zi, zp).value();
  }
  return out;
}

Mat<float> zero_shot_logits(const ObjectEmbeddings& e, const ClassBank& bank,
                            Scheme scheme) {
  const Mat<float> t = bank.embeddings.transpose();
  if (needs_views(scheme) && !e.image) {
    throw CapabilityError("scheme '" + std::string(to_string(scheme)) +
                          "' needs multi-view images, which this dataset does "
                          "not provide; use scheme=point");
  }
  switch (scheme) {
    case Scheme::kPoint:
      return e.point * t;
    case Scheme::kImage:
      return *e.image * t;
    case Scheme::kFusion:
      if (!e.joint) throw CapabilityError("scheme 'fusion' needs the sculptor");
      return *e.joint * t;
    case Scheme::kEnsemble:
      return Mat<float>(e.point * t) + Mat<float>(*e.image * t);
  }
  throw ConfigError("unknown scheme");
}

std::vector<std::size_t> bank_labels(const ClassBank& bank,
                                     const std::vector<std::uint32_t>& labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) {
    auto it = std::find(bank.category_ids.begin(), bank.category_ids.end(), l);
    if (it == bank.category_ids.end()) {
      throw ConfigError("label " + std::to_string(l) + " is not in the bank");
    }
    out.push_back(static_cast<std::size_t>(it - bank.category_ids.begin()));
  }
  return out;
}

EvalReport score(const Mat<float>& logits,
                 const std::vector<std::size_t>& labels,
                 const ClassBank& bank) {
  const auto c = static_cast<std::size_t>(logits.cols());
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw ShapeError("score: one label per logit row required");
  }
  if (c != bank.names.size()) throw ShapeError("score: logits vs bank width");
  EvalReport r;
  r.objects = labels.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  std::vector<std::size_t> count(c, 0), hit1(c, 0);
  std::size_t h1 = 0, h3 = 0, h5 = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t t = labels[i];
    if (t >= c) throw ShapeError("score: label out of range");
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    const float lt = row(static_cast<Eigen::Index>(t));
    std::size_t rank = 0, pred = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const float lk = row(static_cast<Eigen::Index>(k));
      if (lk > lt || (lk == lt && k < t)) ++rank;
      if (lk > row(static_cast<Eigen::Index>(pred))) pred = k;
    }
    ++count[t];
    ++r.confusion[t][pred];
    if (rank < 1) {
      ++h1;
      ++hit1[t];
    }
    h3 += rank < 3;
    h5 += rank < 5;
  }
  const double n = std::max<std::size_t>(labels.size(), 1);
  r.top1 = h1 / n;
  r.top3 = h3 / n;
  r.top5 = h5 / n;
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t k = 0; k < c; ++k) {
    CategoryScore cs;
    cs.id = bank.category_ids[k];
    cs.name = bank.names[k];
    cs.count = count[k];
    cs.top1 = count[k] ? double(hit1[k]) / count[k] : 0.0;
    if (count[k]) {
      sum += cs.top1;
      ++seen;
    }
    r.per_category.push_back(std::move(cs));
  }
  r.top1c = seen ? sum / seen : 0.0;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : per_category) {
    cats.push_back(
        {{"id", c.id}, {"name", c.name}, {"count", c.count}, {"top1", c.top1}});
  }
  return {{"scheme", scheme}, {"split", split},   {"M_eval", m_eval},
          {"objects", objects}, {"top1", top1},   {"top1c", top1c},
          {"top3", top3},       {"top5", top5},   {"per_category", cats},
          {"confusion", confusion}};
}

EvalReport evaluate(const ParamStore<float>& params, const ModelConfig& cfg,
                    const PreparedSplit& s, const ClassBank& bank,
                    Scheme scheme, int m_eval) {
  if (needs_views(scheme) && !s.has_views()) {
    throw CapabilityError("scheme '" + std::string(to_string(scheme)) +
                          "' needs multi-view images, but split '" +
                          std::string(to_string(s.split)) +
                          "' has no views.bin; use scheme=point");
  }
  const int m = needs_views(scheme) ? m_eval : 0;
  const auto e = embed_objects(params, cfg, s, m);
  EvalReport r = score(zero_shot_logits(e, bank, scheme),
                       bank_labels(bank, s.labels), bank);
  r.scheme = std::string(to_string(scheme));
  r.split = std::string(to_string(s.split));
  r.m_eval = m;
  return r;
}

std::vector<std::size_t> retrieve(const RowF& query, const Mat<float>& index,
                                  std::size_t k) {
  if (index.rows() == 0) throw std::invalid_argument("retrieve: empty index");
  if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
  if (query.cols() != index.cols()) throw ShapeError("retrieve: width mismatch");
  const Eigen::VectorXf sim = index * query.transpose();
  std::vector<std::size_t> ids(static_cast<std::size_t>(index.rows()));
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const std::size_t keep = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep),
                    ids.end(), [&](std::size_t a, std::size_t b) {
                      const float sa = sim(static_cast<Eigen::Index>(a));
                      const float sb = sim(static_cast<Eigen::Index>(b));
                      return sa > sb || (sa == sb && a < b);
                    });
  ids.resize(keep);
  return ids;
}

double class_match_at_k(const ObjectEmbeddings& e, const PreparedSplit& s,
                        Scheme scheme, std::size_t k) {
  const Mat<float>* index = nullptr;
  if (scheme == Scheme::kPoint) {
    index = &e.point;
  } else if (scheme == Scheme::kFusion) {
    if (!e.joint) throw CapabilityError("retrieval with fusion needs views");
    index = &*e.joint;
  } else {
    throw ConfigError("retrieval supports the point and fusion schemes");
  }
  double total = 0.0;
  for (std::size_t q = 0; q < s.size(); ++q) {
    for (std::size_t id : retrieve(s.text.row(static_cast<Eigen::Index>(q)),
                                   *index, k)) {
      total += s.labels[id] == s.labels[q];
    }
  }
  return s.size() ? total / double(s.size()) : 0.0;
}

}  // namespace mixcon
