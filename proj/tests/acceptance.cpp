// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include "mixcon/ablate.hpp"
#include "mixcon/cli.hpp"
#include "mixcon/config.hpp"
#include "mixcon/log.hpp"
#include "mixcon/losscheck.hpp"
#include "mixcon/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace mixcon;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::map<int, std::string> lines;

void report(int id, const std::string& name, const std::function<Outcome()>& f) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::ostringstream line;
  line << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << name
       << "): " << o.detail;
  lines[id] = line.str();
  std::cerr << "[acceptance] criterion " << id << " done in "
            << std::chrono::duration<double>(Clock::now() - t0).count() << " s"
            << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Mat<double> gaussian(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Mat<double> unit_rows(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat<double> m = gaussian(rng, r, c);
  m.rowwise().normalize();
  return m;
}

double nce(const Mat<double>& a, const Mat<double>& b, double s) {
  Tape<double> t;
  return info_nce(t.constant(a), t.constant(b),
                  t.constant(Mat<double>::Constant(1, 1, s)))
      .value()(0, 0);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr,
            std::string* err = nullptr) {
  args.push_back("--quiet");
  std::ostringstream o, e;
  const int code = cli::dispatch(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

// ---- criterion bodies ----

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  LossCheckSpec narrow;  // N=4, D=8, P=16, M=2, double, every coordinate
  narrow.seed = 1;
  const auto a = check_loss_gradients(narrow);
  LossCheckSpec wide = narrow;  // production encoder widths, sampled
  wide.point_widths = {64, 128, 256};
  wide.post_width = 256;
  wide.max_coords_per_tensor = 40;
  const auto b = check_loss_gradients(wide);
  const double secs = seconds_since(t0);
  const double worst = std::max(a.max_rel_error, b.max_rel_error);
  return {worst <= 1e-4 && secs < 30.0,
          "max rel error " + fmt(a.max_rel_error, 3) + " over all " +
              std::to_string(a.coordinates) + " coordinates (narrow encoder), " +
              fmt(b.max_rel_error, 3) + " over " + std::to_string(b.coordinates) +
              " sampled (64-128-256 encoder), " + fmt(secs, 3) + " s"};
}

Outcome loss_closed_forms() {
  Rng rng = make_rng(2, Stream::kGradCheck);
  double worst = 0.0;
  auto track = [&](double got, double want, double tol) {
    const double err = std::abs(got - want);
    worst = std::max(worst, err / tol);
  };
  const Mat<double> one = unit_rows(rng, 1, 8);
  track(nce(one, unit_rows(rng, 1, 8), 14.28), 0.0, 1e-9);
  const Mat<double> same = one.replicate(4, 1);
  for (double s : {1.0, 14.28, 100.0}) track(nce(same, same, s), std::log(4.0), 1e-6);
  for (auto [n, s] : {std::pair{2, 14.28}, std::pair{8, 5.0}}) {
    const Mat<double> q =
        Eigen::HouseholderQR<Mat<double>>(gaussian(rng, 16, 16)).householderQ();
    const Mat<double> x = q.topRows(n);
    track(nce(x, x, s), std::log1p((n - 1) * std::exp(-s)), 1e-6);
  }
  return {worst <= 1.0, "worst error / tolerance = " + fmt(worst, 3)};
}

Outcome recipe_exactness(const std::vector<nlohmann::json>& logged_metrics) {
  std::vector<std::string> bad;
  const Schedule s{1e-3, 128, 27, 270};
  const double peak = 1e-3 * 128 / 256;
  if (lr_at(0, s) != 0.0) bad.push_back("lr(0)");
  if (std::abs(lr_at(27, s) - peak) > 1e-15) bad.push_back("lr(warmup end)");
  // cosine midpoint needs an integer step: warmup 30 of 270
  const Schedule even{1e-3, 128, 30, 270};
  if (std::abs(lr_at(150, even) - peak / 2) > 1e-15) bad.push_back("lr(mid)");
  if (lr_at(270, s) != 0.0) bad.push_back("lr(T)");

  ModelConfig cfg;
  auto p = init_params<float>(cfg, 1);
  for (auto& [n, t] : p) t.values.setConstant(0.75f);
  auto s0 = p;
  for (auto& [n, t] : s0) t.values.setConstant(-0.5f);
  auto ema = ema_init(s0, 0.9995);
  for (int k = 0; k < 1000; ++k) ema_update(ema, p);
  const double want = 0.75 + std::pow(0.9995, 1000) * (-0.5 - 0.75);
  double ema_err = 0.0;
  for (const auto& [n, t] : ema.shadow) {
    ema_err = std::max(ema_err, (t.values.array() - want).abs().maxCoeff());
  }
  if (ema_err > 1e-6) bad.push_back("ema error " + fmt(ema_err));

  double init_err = 0.0;
  for (const char* n : kScaleNames) {
    init_err = std::max(
        init_err, std::abs(std::exp(double(init_params<float>(cfg, 7).at(n).values(0, 0))) -
                           14.28));
  }
  if (init_err > 1e-6) bad.push_back("initial scale off by " + fmt(init_err));
  double max_scale = 0.0;
  std::size_t logged = 0;
  for (const auto& rec : logged_metrics) {
    for (const auto& [k, v] : rec["scales"].items()) {
      max_scale = std::max(max_scale, v.get<double>());
      ++logged;
    }
  }
  if (max_scale > 100.0) bad.push_back("logged scale " + fmt(max_scale));
  if (logged == 0) bad.push_back("no logged scales");
  std::string detail = "lr checkpoints exact, EMA error " + fmt(ema_err, 3) +
                       ", init scale error " + fmt(init_err, 3) + ", max of " +
                       std::to_string(logged) + " logged scales " +
                       fmt(max_scale, 5);
  for (const auto& b : bad) detail += "; bad " + b;
  return {bad.empty(), detail};
}

Outcome structural_invariants() {
  Rng rng = make_rng(4, Stream::kGradCheck);
  ModelConfig cfg;
  const auto store = init_params<float>(cfg, 4);
  const int n = 6, p = 64, m = 4, d = cfg.embed_dim;
  BatchInputs<float> in;
  in.points = (0.5 * gaussian(rng, n * p, 6)).cast<float>();
  in.points_per_object = p;
  in.view_embeds = unit_rows(rng, n * m, d).cast<float>();
  in.views_per_object = m;
  in.text = unit_rows(rng, n, d).cast<float>();

  Tape<float> t;
  const auto pv = bind_params(t, store, false);
  const auto e = embed_batch(t, pv, cfg, in);
  double norm_err = 0.0;
  for (const auto* v : {&e.point, &e.image, &e.image_it, &e.joint}) {
    norm_err = std::max(
        norm_err, double((v->value().rowwise().norm().array() - 1.0f).abs().maxCoeff()));
  }

  // point permutation and duplication
  Mat<float> perm = in.points, dup(n * 2 * p, 6);
  std::vector<int> idx(p);
  std::iota(idx.begin(), idx.end(), 0);
  for (int o = 0; o < n; ++o) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < p; ++k) {
      perm.row(o * p + k) = in.points.row(o * p + idx[k]);
      dup.row(o * 2 * p + k) = in.points.row(o * p + k);
      dup.row(o * 2 * p + p + k) = in.points.row(o * p + idx[k]);
    }
  }
  const Mat<float> z0 = e.point.value();
  const Mat<float> z1 = encode_points(pv, cfg, t.constant(perm), p).value();
  const Mat<float> z2 = encode_points(pv, cfg, t.constant(dup), 2 * p).value();
  const double perm_err = std::max((z0 - z1).cwiseAbs().maxCoeff(),
                                   (z0 - z2).cwiseAbs().maxCoeff());

  // view order
  Mat<float> rev = in.view_embeds;
  for (int o = 0; o < n; ++o) {
    for (int k = 0; k < m; ++k) rev.row(o * m + k) = in.view_embeds.row(o * m + m - 1 - k);
  }
  const double view_err =
      (fuse_views(pv, FusionMode::kViewPool, t.constant(rev), m).value() -
       e.image.value())
          .cwiseAbs()
          .maxCoeff();

  // sculptor at the averaging init
  const Mat<float> zs = sculpt(pv, e.point, e.point).value();
  Mat<float> e1 = Mat<float>::Zero(1, d), e2 = e1;
  e1(0, 0) = 1.0f;
  e2(0, 1) = 1.0f;
  const Mat<float> mix = sculpt(pv, t.constant(e1), t.constant(e2)).value();
  const double r2 = 1.0 / std::sqrt(2.0);
  const double sculpt_err =
      std::max({double((zs - z0).cwiseAbs().maxCoeff()), std::abs(mix(0, 0) - r2),
                std::abs(mix(0, 1) - r2)});

  const bool pass = norm_err <= 1e-5 && perm_err <= 1e-6 && view_err <= 1e-6 &&
                    sculpt_err <= 1e-6;
  return {pass, "norm " + fmt(norm_err, 2) + ", permutation/duplication " +
                    fmt(perm_err, 2) + ", view order " + fmt(view_err, 2) +
                    ", sculptor " + fmt(sculpt_err, 2)};
}

Outcome determinism(const fs::path& root) {
  const auto t0 = Clock::now();
  const std::vector<std::string> small = {
      "--set", "data.objects_per_category=30", "--set", "data.eval_in_per_category=6",
      "--set", "data.points=64",  "--set", "teacher.calibration_per_category=10",
      "--set", "train.epochs=3",  "--set", "train.batch_size=32"};
  std::vector<std::string> eval_out(2);
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("det" + std::to_string(run));
    fs::remove_all(dir);
    auto with = [&](std::vector<std::string> a) {
      a.insert(a.end(), small.begin(), small.end());
      a.insert(a.end(), {"--seed", "5"});
      return a;
    };
    const std::string data = (dir / "data").string(), out = (dir / "run").string();
    if (run_cli(with({"gen", "--out", data})) != 0 ||
        run_cli(with({"calibrate", "--data", data})) != 0 ||
        run_cli(with({"train", "--data", data, "--out", out})) != 0 ||
        run_cli({"eval", "--ckpt", out + "/final.ckpt", "--data", data, "--split",
                 "eval_zeroshot", "--scheme", "fusion", "--views", "4"},
                &eval_out[run]) != 0) {
      return {false, "pipeline " + std::to_string(run) + " failed"};
    }
  }
  std::size_t files = 0;
  std::vector<std::string> diff;
  const fs::path a = root / "det0", b = root / "det1";
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    if (rel.filename() == "timing.jsonl") continue;  // wall time only
    ++files;
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
      diff.push_back(rel.string());
    }
  }
  if (eval_out[0] != eval_out[1]) diff.push_back("eval report");
  std::string detail = std::to_string(files) + " files and the eval report compared, " +
                       std::to_string(diff.size()) + " differ (" +
                       fmt(seconds_since(t0), 3) + " s)";
  for (const auto& d : diff) detail += " " + d;
  return {diff.empty() && files > 0, detail};
}

struct Standard {
  fs::path dir;
  DatasetManifest manifest;
  std::unique_ptr<Teacher> teacher;
  PreparedSplit train, eval_in, eval_zs;
  ClassBank bank_in, bank_zs;
};

Outcome teacher_premise(const Standard& s) {
  const auto& e = *s.eval_in.view_embeds;
  const Mat<float> logits = e * s.bank_in.embeddings.transpose();
  std::size_t hit = 0;
  const auto labels = bank_labels(s.bank_in, s.eval_in.labels);
  const int m = s.eval_in.views_stored;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    hit += static_cast<std::size_t>(best) == labels[static_cast<std::size_t>(r / m)];
  }
  const double acc = double(hit) / double(logits.rows());
  const double chance = 1.0 / double(s.bank_in.names.size());
  return {acc >= 2 * chance, "per-view image->text top-1 on eval_in " + fmt(acc) +
                                 " vs chance " + fmt(chance) + " (" +
                                 std::to_string(logits.rows()) + " views)"};
}

}  // namespace

int main() {
  set_quiet(true);
  const fs::path root = fs::temp_directory_path() / "mixcon_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto t_all = Clock::now();

  report(1, "gradient oracle", gradient_oracle);
  report(2, "loss closed forms", loss_closed_forms);
  report(4, "structural invariants", structural_invariants);
  report(5, "determinism", [&] { return determinism(root); });

  // Standard dataset shared by criteria 3 and 6 to 9.
  Standard s;
  s.dir = root / "standard";
  SynthConfig synth;  // 8 + 4 categories, 150 objects, P=256, 12 views
  s.manifest = build_dataset(synth, 1, s.dir);
  {
    const auto train = load_split(s.dir, s.manifest, Split::kTrain);
    TeacherSpec spec;  // D = 64
    spec.seed = 1;
    s.teacher = std::make_unique<Teacher>(spec, 2 * synth.height * synth.width);
    calibrate_on_dataset(*s.teacher, s.manifest, train);
    s.train = prepare_split(train, s.manifest, *s.teacher);
  }
  s.eval_in = prepare_split(load_split(s.dir, s.manifest, Split::kEvalIn), s.manifest,
                            *s.teacher);
  s.eval_zs = prepare_split(load_split(s.dir, s.manifest, Split::kEvalZeroShot),
                            s.manifest, *s.teacher);
  s.bank_in = class_bank_for_split(s.manifest, Split::kEvalIn, *s.teacher);
  s.bank_zs = class_bank_for_split(s.manifest, Split::kEvalZeroShot, *s.teacher);

  report(6, "teacher premise", [&] { return teacher_premise(s); });

  // Baseline and full method, 5 seeds each.
  TrainConfig base;  // 30 epochs, N=128
  AblationData data;
  data.train = &s.train;
  data.evals = {{&s.eval_in, &s.bank_in}, {&s.eval_zs, &s.bank_zs}};
  const auto cells = ablation_grid("trend", base);
  std::vector<nlohmann::json> logged;
  std::optional<ObjectEmbeddings> full_embeds;
  auto hook = [&](const AblationCell& cell, const TrainConfig& cfg,
                  const TrainResult& r) {
    logged.insert(logged.end(), r.metrics.begin(), r.metrics.end());
    if (cell.name == "full" && !full_embeds) {
      full_embeds = embed_objects(ema_weights(r.ema), cfg.model, s.eval_in, 0);
    }
  };
  const auto t_base = Clock::now();
  auto rows = run_ablation({cells[0]}, 1, 3, data, std::nullopt, hook);
  const double base_secs = seconds_since(t_base);
  {
    auto more = run_ablation({cells[0]}, 4, 2, data, std::nullopt, hook);
    rows.insert(rows.end(), more.begin(), more.end());
    more = run_ablation({cells[1]}, 1, 5, data, std::nullopt, hook);
    rows.insert(rows.end(), more.begin(), more.end());
  }

  report(3, "recipe exactness", [&] { return recipe_exactness(logged); });

  report(7, "learning sanity", [&]() -> Outcome {
    std::vector<double> top1;
    for (const auto& r : rows) {
      if (r.cell == "baseline" && r.split == "eval_in" && r.scheme == "point" &&
          std::stoull(r.seed) <= 3) {
        top1.push_back(r.top1);
      }
    }
    const double med = median(top1);
    const double chance = 1.0 / double(s.bank_in.names.size());
    return {med >= 3 * chance && base_secs <= 900.0,
            "baseline eval_in point top-1 median over 3 seeds " + fmt(med) +
                " vs 3x chance " + fmt(3 * chance) + ", wall time " +
                fmt(base_secs, 4) + " s on this machine"};
  });

  const auto summary = with_medians(rows);
  const fs::path csv = fs::current_path() / "acceptance_ablation.csv";
  {
    std::ofstream out(csv);
    out << ablation_csv(summary);
  }
  report(8, "trend ordering", [&]() -> Outcome {
    const auto full_zs = median_top1(summary, "full", "eval_zeroshot", "point");
    const auto base_zs = median_top1(summary, "baseline", "eval_zeroshot", "point");
    const auto full_fusion = median_top1(summary, "full", "eval_in", "fusion");
    const auto full_point = median_top1(summary, "full", "eval_in", "point");
    if (!full_zs || !base_zs || !full_fusion || !full_point) {
      return {false, "missing medians"};
    }
    const bool a = *full_zs >= *base_zs, b = *full_fusion >= *full_point;
    return {a && b, "eval_zeroshot point median full " + fmt(*full_zs) +
                        (a ? " >= " : " < ") + "baseline " + fmt(*base_zs) +
                        "; eval_in full fusion " + fmt(*full_fusion) +
                        (b ? " >= " : " < ") + "point " + fmt(*full_point) +
                        "; table in " + csv.string()};
  });

  report(9, "retrieval", [&]() -> Outcome {
    if (!full_embeds) return {false, "no full-method model"};
    const double cm = class_match_at_k(*full_embeds, s.eval_in, Scheme::kPoint, 5);
    const double chance = 5.0 / double(s.bank_in.names.size());
    return {cm >= 3 * chance, "eval_in class-match@5 " + fmt(cm) + " vs 3x chance " +
                                  fmt(3 * chance) + " (point index, seed 1)"};
  });

  report(10, "capability honesty", [&]() -> Outcome {
    const fs::path d = root / "det0" / "data";
    const fs::path ckpt = root / "det0" / "run" / "final.ckpt";
    fs::remove(split_dir(d, Split::kEvalZeroShot) / "views.bin");
    std::string out, err;
    const int point = run_cli({"eval", "--ckpt", ckpt.string(), "--data", d.string(),
                               "--split", "eval_zeroshot", "--scheme", "point"},
                              &out);
    const int fusion = run_cli({"eval", "--ckpt", ckpt.string(), "--data", d.string(),
                                "--split", "eval_zeroshot", "--scheme", "fusion"},
                               nullptr, &err);
    const bool named = err.find("needs multi-view images") != std::string::npos &&
                       err.find("scheme=point") != std::string::npos;
    return {point == 0 && !out.empty() && fusion == cli::kExitRuntime && named,
            "point exit " + std::to_string(point) + ", fusion exit " +
                std::to_string(fusion) + ": " + err.substr(0, err.find('\n'))};
  });

  for (const auto& [id, line] : lines) std::cout << line << '\n';
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures
            << " failing criteria, " << fmt(seconds_since(t_all), 4) << " s total"
            << std::endl;
  fs::remove_all(root);
  return failures ? 1 : 0;
}
