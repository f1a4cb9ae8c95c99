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


#include "mixcon/cli.hpp"

#include "mixcon/ablate.hpp"
#include "mixcon/binio.hpp"
#include "mixcon/config.hpp"
#include "mixcon/log.hpp"
#include "mixcon/losscheck.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

namespace mixcon::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool dump_defaults = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Config file ([section] key = value)");
  app->add_option("--seed", c.seed, "Run seed; overrides run.seed");
  app->add_option("--set", c.sets, "Override a key: section.key=value");
  app->add_flag("--dump-defaults", c.dump_defaults,
                "Print every config key with its default and exit");
  app->add_flag("--quiet", c.quiet, "Suppress progress messages");
}

RunConfig build_config(const Common& c, const std::optional<fs::path>& fallback) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else if (fallback && fs::exists(*fallback)) {
    cfg = load_config(*fallback);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value: " + s);
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.seed = c.seed;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

std::uint64_t need_seed(const RunConfig& cfg) {
  if (!cfg.seed) {
    throw UsageError("no seed: pass --seed or set run.seed in the config");
  }
  return *cfg.seed;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
  if (!out) throw IoError("cannot write " + p.string());
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

fs::path teacher_path(const fs::path& data) { return data / "teacher.ckpt"; }

Teacher load_teacher(const fs::path& path, const RunConfig& cfg,
                     const DatasetManifest& m) {
  if (!fs::exists(path)) {
    throw IoError("no calibrated teacher at " + path.string() +
                  "; run calibrate first");
  }
  const auto c = load_checkpoint(path);
  auto find = [&](const char* name) -> const Mat<float>& {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) {
      throw FormatError(path.string() + " lacks tensor " + name);
    }
    return it->second.values;
  };
  Teacher t(cfg.teacher, 2 * m.height * m.width);
  t.set_maps(find("teacher/W_I"), find("teacher/W_T"));
  return t;
}

Teacher teacher_from_snapshot(const Snapshot& s, const RunConfig& cfg,
                              const DatasetManifest& m) {
  Teacher t(cfg.teacher, 2 * m.height * m.width);
  t.set_maps(s.teacher_image, s.teacher_text);
  return t;
}

bool split_exists(const fs::path& data, Split s) {
  return fs::exists(split_dir(data, s));
}

int cmd_gen(const Common& c, const std::string& out_dir, std::ostream& out) {
  const auto cfg = build_config(c, std::nullopt);
  const auto seed = need_seed(cfg);
  const fs::path dir(out_dir);
  make_dir(dir);
  const auto m = build_dataset(cfg.data, seed, dir);
  write_text(dir / "config.ini", dump_config(cfg));
  nlohmann::json j = {{"data", dir.string()},
                      {"categories", m.categories.size()},
                      {"train", m.count(Split::kTrain)},
                      {"eval_in", m.count(Split::kEvalIn)},
                      {"eval_zeroshot", m.count(Split::kEvalZeroShot)}};
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_calibrate(const Common& c, const std::string& data_dir,
                  const std::string& out_path, std::ostream& out) {
  const fs::path data(data_dir);
  const auto cfg = build_config(c, data / "config.ini");
  need_seed(cfg);
  const auto m = load_manifest(data);
  const auto train = load_split(data, m, Split::kTrain);
  Teacher t(cfg.teacher, 2 * m.height * m.width);
  const auto r = calibrate_on_dataset(t, m, train);
  Checkpoint ck;
  ck.digest = config_digest(cfg);
  ck.tensors.emplace("teacher/W_I", Tensor<float>::matrix(t.image_map()));
  ck.tensors.emplace("teacher/W_T", Tensor<float>::matrix(t.text_map()));
  const fs::path dest = out_path.empty() ? teacher_path(data) : fs::path(out_path);
  save_checkpoint(dest, ck);
  out << nlohmann::json{{"teacher", dest.string()},
                        {"image_residual", r.image_residual},
                        {"text_residual", r.text_residual},
                        {"image_rows", r.image_rows},
                        {"text_rows", r.text_rows}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data_dir,
              const std::string& out_dir, const std::string& teacher_file,
              bool no_ema, std::ostream& out) {
  const fs::path data(data_dir), run(out_dir);
  auto cfg = build_config(c, std::nullopt);
  need_seed(cfg);
  if (no_ema) cfg.train.use_ema = false;
  const auto m = load_manifest(data);
  const Teacher t = load_teacher(
      teacher_file.empty() ? teacher_path(data) : fs::path(teacher_file), cfg, m);
  make_dir(run);
  write_text(run / "config.ini", dump_config(cfg));

  const auto tr = prepare_split(load_split(data, m, Split::kTrain), m, t);
  std::vector<PreparedSplit> splits;
  std::vector<ClassBank> banks;
  splits.reserve(2);
  banks.reserve(2);
  for (Split s : {Split::kEvalIn, Split::kEvalZeroShot}) {
    if (!split_exists(data, s) || m.count(s) == 0) continue;
    splits.push_back(prepare_split(load_split(data, m, s), m, t));
    banks.push_back(class_bank_for_split(m, s, t));
  }
  std::vector<EvalTarget> evals;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    evals.push_back({&splits[i], &banks[i]});
  }
  std::ofstream metrics(run / "metrics.jsonl", std::ios::trunc);
  std::ofstream timing(run / "timing.jsonl", std::ios::trunc);
  if (!metrics || !timing) throw IoError("cannot write metrics in " + run.string());
  const auto res = train(cfg.train, tr, evals, &metrics, &timing);
  const auto ck = make_checkpoint(static_cast<std::uint64_t>(res.steps),
                                  config_digest(cfg), res.params, res.ema, t);
  save_checkpoint(run / "final.ckpt", ck);
  nlohmann::json j = {{"checkpoint", (run / "final.ckpt").string()},
                      {"steps", res.steps}};
  if (!res.metrics.empty() && res.metrics.back().contains("eval")) {
    j["eval"] = res.metrics.back()["eval"];
  }
  out << j.dump() << '\n';
  return kExitOk;
}

struct Loaded {
  RunConfig cfg;
  DatasetManifest manifest;
  Snapshot snap;
  std::optional<Teacher> teacher;
};

Loaded load_run(const Common& c, const fs::path& ckpt, const fs::path& data) {
  Loaded l;
  l.cfg = build_config(c, ckpt.parent_path() / "config.ini");
  const auto ck = load_checkpoint(ckpt);
  if (ck.digest != config_digest(l.cfg)) {
    log_warning("checkpoint " + ckpt.string() +
                " was written under a different config (digest " +
                to_hex(ck.digest).substr(0, 12) + " vs " +
                to_hex(config_digest(l.cfg)).substr(0, 12) + ")");
  }
  l.manifest = load_manifest(data);
  l.snap = unpack_checkpoint(ck, l.cfg.train.model, l.cfg.teacher);
  l.teacher.emplace(teacher_from_snapshot(l.snap, l.cfg, l.manifest));
  return l;
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& data_dir,
             const std::string& split, const std::string& scheme,
             std::optional<int> views, bool no_ema, const std::string& out_path,
             std::ostream& out) {
  const fs::path data(data_dir);
  auto l = load_run(c, ckpt, data);
  const Split sp = split.empty() ? l.cfg.eval.split : split_from_string(split);
  const Scheme sc = scheme.empty() ? l.cfg.eval.scheme : scheme_from_string(scheme);
  const int m = views.value_or(l.cfg.eval.views);
  const auto s = prepare_split(load_split(data, l.manifest, sp), l.manifest, *l.teacher);
  const auto bank = class_bank_for_split(l.manifest, sp, *l.teacher);
  const bool ema = l.cfg.train.use_ema && !no_ema;
  const auto r = evaluate(ema ? l.snap.ema : l.snap.live, l.cfg.train.model, s,
                          bank, sc, std::min(m, s.views_stored));
  auto j = r.to_json();
  j["weights"] = ema ? "ema" : "live";
  if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_retrieve(const Common& c, const std::string& ckpt,
                 const std::string& data_dir, const std::string& split,
                 const std::string& scheme, const std::string& query,
                 std::optional<int> k_opt, bool class_match, bool no_ema,
                 std::ostream& out) {
  const fs::path data(data_dir);
  auto l = load_run(c, ckpt, data);
  const Split sp = split.empty() ? l.cfg.eval.split : split_from_string(split);
  const Scheme sc = scheme.empty() ? Scheme::kPoint : scheme_from_string(scheme);
  if (sc != Scheme::kPoint && sc != Scheme::kFusion) {
    throw UsageError("retrieve supports --scheme point or fusion");
  }
  const int k = k_opt.value_or(l.cfg.eval.k);
  if (k < 1) throw UsageError("--k must be >= 1");
  const auto s = prepare_split(load_split(data, l.manifest, sp), l.manifest, *l.teacher);
  if (sc == Scheme::kFusion && !s.has_views()) {
    throw CapabilityError("scheme 'fusion' needs multi-view images, but split '" +
                          std::string(to_string(sp)) +
                          "' has no views.bin; use scheme=point");
  }
  const bool ema = l.cfg.train.use_ema && !no_ema;
  const auto e = embed_objects(ema ? l.snap.ema : l.snap.live, l.cfg.train.model,
                               s, sc == Scheme::kFusion
                                      ? std::min(l.cfg.eval.views, s.views_stored)
                                      : 0);
  nlohmann::json j;
  j["split"] = to_string(sp);
  j["scheme"] = to_string(sc);
  j["k"] = k;
  if (class_match) {
    const Split home = sp == Split::kEvalZeroShot ? sp : Split::kTrain;
    const std::size_t cats = l.manifest.category_ids(home).size();
    j["class_match_at_k"] = class_match_at_k(e, s, sc, static_cast<std::size_t>(k));
    j["chance"] = double(k) / double(std::max<std::size_t>(cats, 1));
  }
  if (!query.empty()) {
    const RowF q = l.teacher->embed_text(query);
    const Mat<float>& index = sc == Scheme::kPoint ? e.point : *e.joint;
    const Eigen::VectorXf sim = index * q.transpose();
    nlohmann::json hits = nlohmann::json::array();
    for (std::size_t id : retrieve(q, index, static_cast<std::size_t>(k))) {
      hits.push_back({{"object", id},
                      {"category", l.manifest.categories.at(s.labels[id]).name()},
                      {"caption", s.captions[id]},
                      {"cosine", sim(static_cast<Eigen::Index>(id))}});
    }
    j["query"] = query;
    j["results"] = hits;
  }
  if (!class_match && query.empty()) {
    throw UsageError("retrieve needs --query or --class-match");
  }
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Common& c, double eps, std::size_t coords,
                  std::ostream& out) {
  const auto cfg = build_config(c, std::nullopt);
  LossCheckSpec spec;
  spec.seed = need_seed(cfg);
  spec.eps = eps;
  spec.max_coords_per_tensor = coords;
  const auto r = check_loss_gradients(spec);
  const bool pass = r.max_rel_error <= 1e-4;
  out << nlohmann::json{{"max_rel_error", r.max_rel_error},
                        {"worst_param", r.worst_param},
                        {"worst_index", r.worst_index},
                        {"analytic", r.analytic},
                        {"numeric", r.numeric},
                        {"coordinates", r.coordinates},
                        {"pass", pass}}
             .dump()
      << '\n';
  return pass ? kExitOk : kExitRuntime;
}

int cmd_ablate(const Common& c, const std::string& data_dir,
               const std::string& out_dir, const std::string& teacher_file,
               std::ostream& out) {
  const fs::path data(data_dir), run(out_dir);
  const auto cfg = build_config(c, std::nullopt);
  const auto seed = need_seed(cfg);
  const auto cells = ablation_grid(cfg.ablate.grid, cfg.train);
  const auto m = load_manifest(data);
  const Teacher t = load_teacher(
      teacher_file.empty() ? teacher_path(data) : fs::path(teacher_file), cfg, m);
  make_dir(run / "runs");
  write_text(run / "config.ini", dump_config(cfg));
  const auto tr = prepare_split(load_split(data, m, Split::kTrain), m, t);
  std::vector<PreparedSplit> splits;
  std::vector<ClassBank> banks;
  splits.reserve(2);
  banks.reserve(2);
  for (Split s : {Split::kEvalIn, Split::kEvalZeroShot}) {
    if (!split_exists(data, s) || m.count(s) == 0) continue;
    splits.push_back(prepare_split(load_split(data, m, s), m, t));
    banks.push_back(class_bank_for_split(m, s, t));
  }
  AblationData d;
  d.train = &tr;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    d.evals.push_back({&splits[i], &banks[i]});
  }
  const auto rows =
      with_medians(run_ablation(cells, seed, cfg.ablate.seeds, d, run / "runs"));
  const auto csv = ablation_csv(rows);
  write_text(run / "ablation.csv", csv);
  out << csv;
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"mixcon: contrastive point/image/text alignment lab"};
  app.require_subcommand(0, 1);
  Common common;

  auto* gen = app.add_subcommand("gen", "Build a synthetic dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "Dataset directory")->required();

  auto* cal = app.add_subcommand("calibrate", "Fit the frozen teacher maps");
  std::string cal_data, cal_out;
  cal->add_option("--data", cal_data, "Dataset directory")->required();
  cal->add_option("--out", cal_out, "Teacher file (default <data>/teacher.ckpt)");

  auto* trn = app.add_subcommand("train", "Train a model");
  std::string trn_data, trn_out, trn_teacher;
  bool trn_no_ema = false;
  trn->add_option("--data", trn_data, "Dataset directory")->required();
  trn->add_option("--out", trn_out, "Run directory")->required();
  trn->add_option("--teacher", trn_teacher, "Teacher file");
  trn->add_flag("--no-ema", trn_no_ema, "Evaluate live weights");

  auto* ev = app.add_subcommand("eval", "Zero-shot classification");
  std::string ev_ckpt, ev_data, ev_split, ev_scheme, ev_out;
  std::optional<int> ev_views;
  bool ev_no_ema = false;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--split", ev_split, "train | eval_in | eval_zeroshot");
  ev->add_option("--scheme", ev_scheme, "point | image | fusion | ensemble");
  ev->add_option("--views", ev_views, "Views per object at inference");
  ev->add_option("--out", ev_out, "Also write the report here");
  ev->add_flag("--no-ema", ev_no_ema, "Use live weights");

  auto* rt = app.add_subcommand("retrieve", "Text to shape retrieval");
  std::string rt_ckpt, rt_data, rt_split, rt_scheme, rt_query;
  std::optional<int> rt_k;
  bool rt_match = false, rt_no_ema = false;
  rt->add_option("--ckpt", rt_ckpt, "Checkpoint")->required();
  rt->add_option("--data", rt_data, "Dataset directory")->required();
  rt->add_option("--split", rt_split, "Split to index");
  rt->add_option("--scheme", rt_scheme, "point | fusion");
  rt->add_option("--query", rt_query, "Query text");
  rt->add_option("--k", rt_k, "Results per query");
  rt->add_flag("--class-match", rt_match,
               "Report class-match@k over every caption of the split");
  rt->add_flag("--no-ema", rt_no_ema, "Use live weights");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full loss");
  double gc_eps = 1e-5;
  std::size_t gc_coords = 0;
  gc->add_option("--eps", gc_eps, "Central difference step in [1e-6, 1e-4]");
  gc->add_option("--coords", gc_coords,
                 "Coordinates sampled per tensor (0 = all)");

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid");
  std::string ab_data, ab_out, ab_teacher;
  ab->add_option("--data", ab_data, "Dataset directory")->required();
  ab->add_option("--out", ab_out, "Report directory")->required();
  ab->add_option("--teacher", ab_teacher, "Teacher file");
  ab->add_option("--grid", [&](const CLI::results_t& r) {
    common.sets.push_back("ablate.grid=" + r.at(0));
    return true;
  }, "trend | table3 | table4 | table6 | adapter");
  ab->add_option("--seeds", [&](const CLI::results_t& r) {
    common.sets.push_back("ablate.seeds=" + r.at(0));
    return true;
  }, "Seeds per cell");

  for (auto* sub : {gen, cal, trn, ev, rt, gc, ab}) {
    add_common(sub, common);
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  const bool dump_requested =
      std::find(args.begin(), args.end(), "--dump-defaults") != args.end();
  if (dump_requested) {
    out << dump_config(RunConfig{});
    return kExitOk;
  }
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitUsage;
  }
  set_quiet(common.quiet);

  try {
    if (gen->parsed()) return cmd_gen(common, gen_out, out);
    if (cal->parsed()) return cmd_calibrate(common, cal_data, cal_out, out);
    if (trn->parsed()) {
      return cmd_train(common, trn_data, trn_out, trn_teacher, trn_no_ema, out);
    }
    if (ev->parsed()) {
      return cmd_eval(common, ev_ckpt, ev_data, ev_split, ev_scheme, ev_views,
                      ev_no_ema, ev_out, out);
    }
    if (rt->parsed()) {
      return cmd_retrieve(common, rt_ckpt, rt_data, rt_split, rt_scheme,
                          rt_query, rt_k, rt_match, rt_no_ema, out);
    }
    if (gc->parsed()) return cmd_gradcheck(common, gc_eps, gc_coords, out);
    if (ab->parsed()) return cmd_ablate(common, ab_data, ab_out, ab_teacher, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mixcon::cli
