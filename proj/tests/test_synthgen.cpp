#include "mixcon/synthgen.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace mixcon {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mixcon_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.train_categories = 3;
  cfg.zeroshot_categories = 2;
  cfg.objects_per_category = 4;
  cfg.eval_in_per_category = 2;
  cfg.points = 32;
  cfg.views = 4;
  cfg.height = 12;
  cfg.width = 12;
  return cfg;
}

TEST(SurfaceSampling, UnitSphereWithoutNoiseHasUnitNorms) {
  ShapeSpec spec;
  spec.family = Family::kSphere;
  const Mat<double> pts = sample_surface_points(spec, 4, 7, 0.0);
  ASSERT_EQ(pts.rows(), 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(pts.row(i).head<3>().norm(), 1.0, 1e-6);
  }
}

TEST(SurfaceSampling, CubeFacesBeforeAndAfterNormalization) {
  const Mat<double> raw = sample_canonical_surface(Family::kBox, 200, 3);
  for (int i = 0; i < raw.rows(); ++i) {
    EXPECT_DOUBLE_EQ(raw.row(i).cwiseAbs().maxCoeff(), 1.0);
  }
  // Normalization divides by one common factor, so every point keeps the
  // same max-abs coordinate.
  ShapeSpec spec;
  spec.family = Family::kBox;
  const Mat<double> pts = sample_surface_points(spec, 200, 3, 0.0);
  const double face = pts.row(0).head<3>().cwiseAbs().maxCoeff();
  for (int i = 0; i < pts.rows(); ++i) {
    EXPECT_NEAR(pts.row(i).head<3>().cwiseAbs().maxCoeff(), face, 1e-12);
  }
  EXPECT_NEAR(pts.leftCols(3).rowwise().norm().maxCoeff(), 1.0, 1e-12);
}

TEST(SurfaceSampling, EveryFamilyLiesOnItsAnalyticSurface) {
  for (int f = 0; f < kFamilyCount; ++f) {
    const auto fam = static_cast<Family>(f);
    const Mat<double> pts = sample_canonical_surface(fam, 500, 11 + f);
    for (int i = 0; i < pts.rows(); ++i) {
      EXPECT_LE(std::abs(canonical_surface_residual(fam, pts.row(i))), 1e-6)
          << to_string(fam) << " point " << i;
    }
  }
}

TEST(SurfaceSampling, ScaledSamplesStayOnScaledSurface) {
  ShapeSpec spec;
  spec.family = Family::kTorus;
  spec.scale_xyz = Eigen::Vector3d(0.5, 1.2, 1.7);
  const Mat<double> canon = sample_canonical_surface(spec.family, 64, 5);
  const Mat<double> scaled = canon * spec.scale_xyz.asDiagonal();
  for (int i = 0; i < scaled.rows(); ++i) {
    const Eigen::Vector3d back =
        scaled.row(i).transpose().cwiseQuotient(spec.scale_xyz);
    EXPECT_LE(std::abs(canonical_surface_residual(spec.family, back)), 1e-6);
  }
}

TEST(SurfaceSampling, DeterministicForFixedKey) {
  ShapeSpec spec;
  spec.family = Family::kCapsule;
  spec.scale_xyz = Eigen::Vector3d(0.7, 0.9, 1.4);
  spec.color = ColorWord::kPurple;
  const Mat<double> a = sample_surface_points(spec, 128, 99);
  const Mat<double> b = sample_surface_points(spec, 128, 99);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(SurfaceSampling, ColorsAreJitteredPalette) {
  ShapeSpec spec;
  spec.color = ColorWord::kBlue;
  const Mat<double> pts = sample_surface_points(spec, 100, 1);
  const Eigen::Vector3d base = palette_rgb(ColorWord::kBlue);
  for (int i = 0; i < pts.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE(std::abs(pts(i, 3 + c) - base[c]), 0.05 + 1e-12);
      EXPECT_GE(pts(i, 3 + c), 0.0);
      EXPECT_LE(pts(i, 3 + c), 1.0);
    }
  }
}

TEST(SurfaceSampling, UnsupportedFamilyIsAConfigError) {
  EXPECT_THROW(sample_canonical_surface(static_cast<Family>(42), 8, 0),
               ConfigError);
}

TEST(Render, SphereIsACenteredDisc) {
  ShapeSpec spec;
  spec.family = Family::kSphere;
  spec.object_seed = 17;
  const ViewStack v = render_views(spec, default_poses(), 32, 32);
  ASSERT_EQ(v.images.size(), 12u);
  for (std::size_t k = 0; k < v.images.size(); ++k) {
    EXPECT_EQ(v.silhouette(k, 16, 16), 1.0f);
    EXPECT_EQ(v.silhouette(k, 0, 0), 0.0f);
    EXPECT_EQ(v.depth(k, 0, 0), 0.0f);
  }
}

TEST(Render, OppositeAzimuthsOfABoxMirror) {
  ShapeSpec spec;
  spec.family = Family::kBox;
  spec.scale_xyz = Eigen::Vector3d(0.8, 1.3, 0.6);
  spec.object_seed = 5;
  const std::vector<CameraPose> poses = {{0.0, 20.0}, {180.0, 20.0}};
  const ViewStack v = render_views(spec, poses, 24, 24);
  int mismatches = 0;
  for (int r = 0; r < 24; ++r) {
    for (int c = 0; c < 24; ++c) {
      if (v.silhouette(0, r, c) != v.silhouette(1, r, 23 - c)) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Render, PixelsInRangeAndDepthZeroOutsideSilhouette) {
  ShapeSpec spec;
  spec.family = Family::kCone;
  spec.scale_xyz = Eigen::Vector3d(1.0, 1.0, 1.8);
  const ViewStack v = render_views(spec, default_poses(), 16, 16);
  for (const auto& img : v.images) {
    EXPECT_GE(img.minCoeff(), 0.0f);
    EXPECT_LE(img.maxCoeff(), 1.0f);
    for (int k = 0; k < img.cols(); ++k) {
      if (img(0, k) == 0.0f) EXPECT_EQ(img(1, k), 0.0f);
    }
  }
}

TEST(Render, RejectsDegenerateInputs) {
  ShapeSpec spec;
  EXPECT_THROW(render_views(spec, {}, 16, 16), ConfigError);
  EXPECT_THROW(render_views(spec, default_poses(), 4, 16), ConfigError);
}

TEST(Captions, TemplateSubstitution) {
  ShapeSpec spec;
  spec.family = Family::kSphere;
  spec.size = SizeWord::kLarge;
  spec.proportion = ProportionWord::kRegular;
  spec.color = ColorWord::kRed;
  const auto templates = default_caption_templates();
  EXPECT_EQ(make_caption(spec, templates, 0), "a large regular red sphere");

  const std::string other = make_caption(spec, templates, 1);
  EXPECT_NE(other, make_caption(spec, templates, 0));
  EXPECT_NE(other.find("sphere"), std::string::npos);
}

TEST(Captions, WhitespaceRoundTrip) {
  ShapeSpec spec;
  spec.family = Family::kPyramid;
  spec.color = ColorWord::kOrange;
  const auto templates = default_caption_templates();
  for (std::size_t t = 0; t < templates.size(); ++t) {
    const std::string cap = make_caption(spec, templates, t);
    std::istringstream in(cap);
    std::string tok, joined;
    while (in >> tok) joined += (joined.empty() ? "" : " ") + tok;
    EXPECT_EQ(joined, cap);
  }
  EXPECT_THROW(make_caption(spec, templates, templates.size()), ConfigError);
}

TEST(Categories, SplitsAreDisjointAndZeroShotReusesFamilies) {
  SynthConfig cfg;
  const auto cats = choose_categories(cfg, 2024);
  ASSERT_EQ(cats.size(), 12u);
  std::set<std::tuple<int, int, int>> train, zs;
  std::set<int> train_families;
  for (const auto& c : cats) {
    EXPECT_EQ(c.id, &c - cats.data());
    auto key = std::make_tuple(int(c.family), int(c.size), int(c.proportion));
    if (c.home_split == Split::kTrain) {
      train.insert(key);
      train_families.insert(int(c.family));
    } else {
      zs.insert(key);
    }
  }
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(zs.size(), 4u);
  EXPECT_EQ(train_families.size(), 8u);
  for (const auto& k : zs) {
    EXPECT_EQ(train.count(k), 0u);
    EXPECT_EQ(train_families.count(std::get<0>(k)), 1u);
  }
}

TEST(Dataset, CountsForTheStandardLayout) {
  SynthConfig cfg;
  cfg.points = 8;
  cfg.views = 1;
  cfg.height = 8;
  cfg.width = 8;
  const fs::path dir = scratch_dir("counts");
  const DatasetManifest m = build_dataset(cfg, 1, dir);
  EXPECT_EQ(m.categories.size(), 12u);
  EXPECT_EQ(m.count(Split::kTrain), 1200u);
  EXPECT_EQ(m.count(Split::kEvalIn), 200u);
  EXPECT_EQ(m.count(Split::kEvalZeroShot), 600u);
  fs::remove_all(dir);
}

TEST(Dataset, RoundTripAndInvariants) {
  const SynthConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("roundtrip");
  const DatasetManifest built = build_dataset(cfg, 77, dir);
  const DatasetManifest m = load_manifest(dir);
  EXPECT_EQ(m.count(Split::kTrain), 12u);
  EXPECT_EQ(m.count(Split::kEvalIn), 6u);
  EXPECT_EQ(m.count(Split::kEvalZeroShot), 8u);
  EXPECT_EQ(m.poses.size(), 4u);
  EXPECT_EQ(m.category_names(), built.category_names());

  const auto train_ids = m.category_ids(Split::kTrain);
  const std::set<std::uint32_t> train_set(train_ids.begin(), train_ids.end());
  for (Split s : kAllSplits) {
    const SplitData d = load_split(dir, m, s);
    ASSERT_TRUE(d.has_views());
    EXPECT_EQ(d.size(), m.count(s));
    EXPECT_EQ(d.views->rows(), static_cast<Eigen::Index>(d.size()) * m.views);
    EXPECT_LE(d.points.leftCols(3).rowwise().norm().maxCoeff(), 1.0f + 1e-6f);
    EXPECT_GE(d.views->minCoeff(), 0.0f);
    EXPECT_LE(d.views->maxCoeff(), 1.0f);
    for (auto label : d.labels) {
      EXPECT_EQ(train_set.count(label) == 1, s != Split::kEvalZeroShot);
    }
  }

  // A train object regenerated from the manifest matches the stored bytes.
  const SplitData train = load_split(dir, m, Split::kTrain);
  const Triplet t = make_triplet(m, m.categories[0], Split::kTrain, 0);
  EXPECT_EQ(t.caption, train.captions[0]);
  const Mat<float> p = t.points.cast<float>();
  EXPECT_TRUE(p == train.points.topRows(m.points));
  fs::remove_all(dir);
}

TEST(Dataset, IdenticalSeedsGiveIdenticalBytes) {
  const SynthConfig cfg = tiny_config();
  const fs::path a = scratch_dir("det_a");
  const fs::path b = scratch_dir("det_b");
  build_dataset(cfg, 5, a);
  build_dataset(cfg, 5, b);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (Split s : kAllSplits) {
    for (const char* f : {"points.bin", "views.bin", "labels.bin"}) {
      EXPECT_EQ(slurp(split_dir(a, s) / f), slurp(split_dir(b, s) / f)) << f;
    }
  }
  const fs::path c = scratch_dir("det_c");
  build_dataset(cfg, 6, c);
  EXPECT_NE(slurp(split_dir(a, Split::kTrain) / "points.bin"),
            slurp(split_dir(c, Split::kTrain) / "points.bin"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST(Dataset, RejectsEmptySplitsAndDetectsTruncation) {
  SynthConfig cfg = tiny_config();
  cfg.zeroshot_categories = 0;
  EXPECT_THROW(build_dataset(cfg, 1, scratch_dir("empty")), ConfigError);

  const fs::path dir = scratch_dir("trunc");
  const DatasetManifest m = build_dataset(tiny_config(), 3, dir);
  const fs::path pts = split_dir(dir, Split::kEvalIn) / "points.bin";
  fs::resize_file(pts, fs::file_size(pts) - 1);
  EXPECT_ANY_THROW(load_split(dir, m, Split::kEvalIn));

  // A missing views blob is tolerated; the split just has no views.
  fs::remove(split_dir(dir, Split::kTrain) / "views.bin");
  EXPECT_FALSE(load_split(dir, m, Split::kTrain).has_views());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace mixcon
