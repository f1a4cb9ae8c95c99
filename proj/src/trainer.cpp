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

#include "mixcon/trainer.hpp"

#include "mixcon/binio.hpp"
#include "mixcon/log.hpp"
#include "mixcon/rng.hpp"

#include <openssl/evp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mixcon {
namespace {

constexpr char kCkptMagic[4] = {'M', 'X', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;
constexpr const char* kEmaPrefix = "ema/";
constexpr const char* kTeacherImage = "teacher/W_I";
constexpr const char* kTeacherText = "teacher/W_T";

// Step buffers are tens of MB; by default glibc maps and unmaps them every
// step and page faults dominate.
void keep_large_blocks() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

bool starts_with(const std::string& s, std::string_view p) {
  return s.rfind(p, 0) == 0;
}

nlohmann::json loss_json(const std::array<double, 4>& sums,
                         const std::array<bool, 4>& on, double total,
                         double steps) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < 4; ++k) {
    if (on[k]) j[kLossNames[k]] = sums[k] / steps;
  }
  j["l_total"] = total / steps;
  return j;
}

}  // namespace

int TrainConfig::warmup() const {
  return warmup_epochs >= 0 ? warmup_epochs
                            : static_cast<int>(std::lround(0.1 * epochs));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(base_lr >= 0.0)) throw ConfigError("train: base_lr must be >= 0");
  if (warmup() >= epochs) {
    throw ConfigError("train: warmup epochs must be < epochs");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
    throw ConfigError("train: ema_decay must lie in [0, 1)");
  }
  if (views_train < 1) throw ConfigError("train: views_train must be >= 1");
  if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
  if (eval_views < 1) throw ConfigError("train: eval_views must be >= 1");
  if (!flags.any()) throw ConfigError("train: every loss term is disabled");
  if (flags.d3_t && !model.sculptor) {
    throw ConfigError("train: the 3D-text term needs the sculptor");
  }
  if (adamw.weight_decay < 0.0) {
    throw ConfigError("train: weight_decay must be >= 0");
  }
  model.validate();
}

ParamStore<float> ema_weights(const EmaState& ema) {
  ParamStore<float> out;
  for (const auto& [name, t] : ema.shadow) {
    out.emplace(name, t.template cast<float>());
  }
  return out;
}

Digest sha256(std::string_view data) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != d.size()) {
    throw std::runtime_error("sha256 failed");
  }
  return d;
}

std::string to_hex(const Digest& d) {
  static const char* kHex = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  BinaryWriter w(path);
  w.bytes(kCkptMagic, 4);
  w.u32(c.version);
  w.u64(c.step);
  w.bytes(c.digest.data(), c.digest.size());
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape) w.u32(static_cast<std::uint32_t>(e));
    w.f32s({t.values.data(), static_cast<std::size_t>(t.values.size())});
  }
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto file_size = std::filesystem::file_size(path);
  BinaryReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kCkptMagic)) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCkptVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(c.version));
  }
  c.step = r.u64();
  r.bytes(c.digest.data(), c.digest.size());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string(r.u16());
    const std::uint8_t rank = r.u8();
    std::vector<std::int64_t> shape;
    std::uint64_t elems = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32());
      elems *= static_cast<std::uint64_t>(shape.back());
      if (elems * 4 > file_size) {
        throw TruncatedError("truncated file: " + path.string());
      }
    }
    const Eigen::Index cols = rank == 0 ? 1 : shape.back();
    const Eigen::Index rows =
        cols == 0 ? 0 : static_cast<Eigen::Index>(elems) / cols;
    Mat<float> v(rows, cols);
    r.f32s({v.data(), static_cast<std::size_t>(v.size())});
    if (!c.tensors.emplace(name, Tensor<float>(shape, std::move(v))).second) {
      throw FormatError("duplicate tensor " + name + " in " + path.string());
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes in " + path.string());
  return c;
}

Checkpoint make_checkpoint(std::uint64_t step, const Digest& digest,
                           const ParamStore<float>& live, const EmaState& ema,
                           const Teacher& teacher) {
  Checkpoint c;
  c.step = step;
  c.digest = digest;
  c.tensors = live;
  for (const auto& [name, t] : ema_weights(ema)) {
    c.tensors.emplace(kEmaPrefix + name, t);
  }
  c.tensors.emplace(kTeacherImage, Tensor<float>::matrix(teacher.image_map()));
  c.tensors.emplace(kTeacherText, Tensor<float>::matrix(teacher.text_map()));
  return c;
}

Snapshot unpack_checkpoint(const Checkpoint& c, const ModelConfig& model,
                           const TeacherSpec& teacher) {
  Snapshot s;
  for (const auto& [name, t] : c.tensors) {
    if (name == kTeacherImage) {
      s.teacher_image = t.values;
    } else if (name == kTeacherText) {
      s.teacher_text = t.values;
    } else if (starts_with(name, kEmaPrefix)) {
      s.ema.emplace(name.substr(4), t);
    } else if (starts_with(name, "teacher/")) {
      throw ShapeError("unexpected tensor " + name);
    } else {
      s.live.emplace(name, t);
    }
  }
  check_store(model, s.live);
  try {
    check_store(model, s.ema);
  } catch (const ShapeError& e) {
    throw ShapeError(std::string("ema/: ") + e.what());
  }
  const Eigen::Index d = teacher.embed_dim, f = teacher.features();
  for (const auto* m : {&s.teacher_image, &s.teacher_text}) {
    if (m->rows() != d || m->cols() != f) {
      throw ShapeError(std::string(m == &s.teacher_image ? kTeacherImage
                                                          : kTeacherText) +
                       " must be " + ad::detail::dims(d, f));
    }
  }
  return s;
}

std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t train_size) {
  return static_cast<std::int64_t>(train_size) / cfg.batch_size;
}

TrainResult train(const TrainConfig& cfg, const PreparedSplit& tr,
                  const std::vector<EvalTarget>& evals, std::ostream* metrics,
                  std::ostream* timing) {
  cfg.validate();
  keep_large_blocks();
  const std::size_t n = tr.size();
  if (static_cast<std::size_t>(cfg.batch_size) > n) {
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds the " + std::to_string(n) + " train objects");
  }
  const LossFlags& flags = cfg.flags;
  const bool images = flags.p_i || flags.i_t || flags.d3_t;
  if (images && !tr.has_views()) {
    throw ConfigError("train: image loss terms need train views");
  }
  if (images && cfg.views_train > tr.views_stored) {
    throw ConfigError("train: views_train exceeds stored views");
  }

  const std::int64_t spe = steps_per_epoch(cfg, n);
  const Schedule sched{cfg.base_lr, cfg.batch_size, cfg.warmup() * spe,
                       cfg.epochs * spe};
  sched.validate();

  TrainResult res;
  res.params = init_params<float>(cfg.model, cfg.seed);
  res.ema = ema_init(res.params, cfg.ema_decay);
  OptimState<float> opt;
  opt.hyper = cfg.adamw;

  const Eigen::Index p = tr.points_per_object;
  const Eigen::Index d = cfg.model.embed_dim;
  const Eigen::Index m = cfg.views_train;
  const Eigen::Index bn = cfg.batch_size;
  BatchInputs<float> in;
  in.points_per_object = p;
  in.views_per_object = m;
  in.points.resize(bn * p, 6);
  in.text.resize(bn, d);
  if (images) in.view_embeds.resize(bn * m, d);

  std::vector<std::size_t> order(n);
  std::vector<int> view_pool(static_cast<std::size_t>(tr.views_stored));
  std::int64_t step = 0;
  double lr = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng = make_rng(cfg.seed, Stream::kBatchOrder,
                             static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng);

    std::array<double, 4> sums{};
    double total = 0.0;
    for (std::int64_t b = 0; b < spe; ++b) {
      ++step;
      Rng view_rng = make_rng(cfg.seed, Stream::kViewSubsample,
                              static_cast<std::uint64_t>(step));
      for (Eigen::Index i = 0; i < bn; ++i) {
        const auto o = static_cast<Eigen::Index>(
            order[static_cast<std::size_t>(b * bn + i)]);
        in.points.middleRows(i * p, p) = tr.points.middleRows(o * p, p);
        in.text.row(i) = tr.text.row(o);
        if (!images) continue;
        std::iota(view_pool.begin(), view_pool.end(), 0);
        for (Eigen::Index k = 0; k < m; ++k) {
          std::uniform_int_distribution<Eigen::Index> pick(k, tr.views_stored - 1);
          std::swap(view_pool[static_cast<std::size_t>(k)],
                    view_pool[static_cast<std::size_t>(pick(view_rng))]);
          in.view_embeds.row(i * m + k) = tr.view_embeds->row(
              o * tr.views_stored + view_pool[static_cast<std::size_t>(k)]);
        }
      }

      Tape<float> tape;
      const auto pv = bind_params(tape, res.params, true);
      const auto loss = batch_loss(tape, pv, cfg.model, in, flags);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " step " << step;
        const auto terms = loss.terms();
        for (std::size_t k = 0; k < 4; ++k) {
          if (terms[k]) msg << ' ' << kLossNames[k] << '=' << *terms[k];
        }
        for (const char* s : kScaleNames) {
          msg << ' ' << s << '=' << res.params.at(s).values(0, 0);
        }
        throw NumericError(msg.str());
      }
      const auto grads = tape.backward(loss.total_var);
      lr = lr_at(step, sched);
      adamw_step(res.params, grads, opt, lr);
      clamp_scales(res.params);
#ifndef NDEBUG
      for (const char* s : kScaleNames) {
        assert(std::exp(double(res.params.at(s).values(0, 0))) <= kMaxScale);
      }
#endif
      ema_update(res.ema, res.params);

      const auto terms = loss.terms();
      for (std::size_t k = 0; k < 4; ++k) sums[k] += terms[k].value_or(0.0);
      total += loss.total;
    }

    nlohmann::json rec;
    rec["epoch"] = epoch;
    rec["step"] = step;
    rec["lr"] = lr;
    rec["losses"] = loss_json(sums, flags.as_array(), total, double(spe));
    nlohmann::json scales = nlohmann::json::object();
    for (const char* s : kScaleNames) {
      scales[std::string(s).substr(6)] =
          std::exp(double(res.params.at(s).values(0, 0)));
    }
    rec["scales"] = scales;
    const bool last = epoch == cfg.epochs;
    if (!evals.empty() &&
        (last || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0))) {
      const ParamStore<float> w =
          cfg.use_ema ? ema_weights(res.ema) : res.params;
      nlohmann::json blocks = nlohmann::json::array();
      for (const auto& t : evals) {
        for (Scheme s : cfg.eval_schemes) {
          if (s != Scheme::kPoint && !t.split->has_views()) continue;
          if (s == Scheme::kFusion && !cfg.model.sculptor) continue;
          const auto r = evaluate(w, cfg.model, *t.split, *t.bank, s,
                                  std::min(cfg.eval_views, t.split->views_stored));
          blocks.push_back({{"split", r.split},
                            {"scheme", r.scheme},
                            {"M_eval", r.m_eval},
                            {"weights", cfg.use_ema ? "ema" : "live"},
                            {"top1", r.top1},
                            {"top1c", r.top1c},
                            {"top3", r.top3},
                            {"top5", r.top5}});
        }
      }
      rec["eval"] = blocks;
    }
    if (metrics) *metrics << rec.dump() << '\n';
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    if (timing) {
      *timing << nlohmann::json{{"epoch", epoch}, {"wall_seconds", secs}}.dump()
              << '\n';
    }
    std::ostringstream note;
    note << "epoch " << epoch << "/" << cfg.epochs << " loss "
         << total / double(spe) << " (" << secs << " s)";
    log_info(note.str());
    res.metrics.push_back(std::move(rec));
  }
  res.steps = step;
  return res;
}

}  // namespace mixcon
