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

// Dataset directory layout:
//
//   manifest.json
//   <split>/points.bin   "MXC3", u32 version, u32 count, f32[count][P][6]
//   <split>/views.bin    "MXC3", u32 version, u32 count, f32[count][M][2][H][W]
//   <split>/labels.bin   "MXC3", u32 version, u32 count,
//                        {u32 category, u32 byte length, utf-8 caption}[count]

#include "mixcon/binio.hpp"
#include "mixcon/synthgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace mixcon {
namespace {

constexpr char kBlobMagic[4] = {'M', 'X', 'C', '3'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr std::uint32_t kManifestVersion = 1;
constexpr std::size_t kChunk = 64;

using nlohmann::json;

void write_header(BinaryWriter& w, std::uint32_t count) {
  w.bytes(kBlobMagic, 4);
  w.u32(kBlobVersion);
  w.u32(count);
}

std::uint32_t read_header(BinaryReader& r, std::uint32_t expected_count) {
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kBlobMagic)) {
    throw FormatError("bad magic in " + r.path().string());
  }
  const std::uint32_t version = r.u32();
  if (version != kBlobVersion) {
    throw FormatError("unsupported blob version " + std::to_string(version) +
                      " in " + r.path().string());
  }
  const std::uint32_t count = r.u32();
  if (count != expected_count) {
    throw FormatError("object count " + std::to_string(count) +
                      " disagrees with manifest in " + r.path().string());
  }
  return count;
}

// Objects of a split in storage order: category-major, then object index.
std::vector<std::pair<const Category*, std::uint64_t>> split_objects(
    const DatasetManifest& m, Split split, const SynthConfig& cfg) {
  const Split home = split == Split::kEvalZeroShot ? Split::kEvalZeroShot
                                                   : Split::kTrain;
  const int per = split == Split::kEvalIn ? cfg.eval_in_per_category
                                          : cfg.objects_per_category;
  std::vector<std::pair<const Category*, std::uint64_t>> out;
  std::uint64_t index = 0;
  for (const auto& c : m.categories) {
    if (c.home_split != home) continue;
    for (int k = 0; k < per; ++k) out.emplace_back(&c, index++);
  }
  return out;
}

json to_json(const DatasetManifest& m) {
  json cats = json::array();
  for (const auto& c : m.categories) {
    cats.push_back({{"id", c.id},
                    {"name", c.name()},
                    {"family", std::string(to_string(c.family))},
                    {"size", std::string(to_string(c.size))},
                    {"proportion", std::string(to_string(c.proportion))},
                    {"split", std::string(to_string(c.home_split))}});
  }
  json poses = json::array();
  for (const auto& p : m.poses) {
    poses.push_back(
        {{"azimuth_deg", p.azimuth_deg}, {"elevation_deg", p.elevation_deg}});
  }
  json counts = json::object();
  for (Split s : kAllSplits) counts[std::string(to_string(s))] = m.count(s);
  return json{{"version", m.version},
              {"counts", counts},
              {"categories", cats},
              {"P", m.points},
              {"M", m.views},
              {"H", m.height},
              {"W", m.width},
              {"poses", poses},
              {"seed", m.seed},
              {"noise_sigma", m.noise_sigma},
              {"caption_templates", m.caption_templates}};
}

template <typename E>
E word_from(std::string_view s, int count, const char* what) {
  for (int i = 0; i < count; ++i) {
    if (to_string(static_cast<E>(i)) == s) return static_cast<E>(i);
  }
  throw FormatError(std::string("manifest: unknown ") + what + " '" +
                    std::string(s) + "'");
}

}  // namespace

std::filesystem::path split_dir(const std::filesystem::path& dir, Split s) {
  return dir / std::string(to_string(s));
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in " + dir.string());
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("missing manifest.json in " + dir.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kManifestVersion) {
      throw FormatError("unsupported manifest version " +
                        std::to_string(m.version));
    }
    for (Split s : kAllSplits) {
      m.counts[static_cast<std::size_t>(s)] =
          j.at("counts").at(std::string(to_string(s))).get<std::uint32_t>();
    }
    for (const auto& c : j.at("categories")) {
      Category cat;
      cat.id = c.at("id").get<std::uint32_t>();
      cat.family = family_from_string(c.at("family").get<std::string>());
      cat.size = word_from<SizeWord>(c.at("size").get<std::string>(),
                                     kSizeCount, "size");
      cat.proportion = word_from<ProportionWord>(
          c.at("proportion").get<std::string>(), kProportionCount,
          "proportion");
      cat.home_split = split_from_string(c.at("split").get<std::string>());
      if (cat.id != m.categories.size()) {
        throw FormatError("manifest: category ids must be dense 0..C-1");
      }
      m.categories.push_back(cat);
    }
    m.points = j.at("P").get<int>();
    m.views = j.at("M").get<int>();
    m.height = j.at("H").get<int>();
    m.width = j.at("W").get<int>();
    for (const auto& p : j.at("poses")) {
      m.poses.push_back({p.at("azimuth_deg").get<double>(),
                         p.at("elevation_deg").get<double>()});
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.noise_sigma = j.at("noise_sigma").get<double>();
    m.caption_templates =
        j.at("caption_templates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest build_dataset(const SynthConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& dir) {
  cfg.validate();
  DatasetManifest m;
  m.categories = choose_categories(cfg, seed);
  m.points = cfg.points;
  m.views = cfg.views;
  m.height = cfg.height;
  m.width = cfg.width;
  m.poses = default_poses(cfg.views);
  m.seed = seed;
  m.caption_templates = default_caption_templates();
  m.noise_sigma = cfg.noise_sigma;

  std::filesystem::create_directories(dir);
  for (Split split : kAllSplits) {
    const auto objects = split_objects(m, split, cfg);
    m.counts[static_cast<std::size_t>(split)] =
        static_cast<std::uint32_t>(objects.size());
    const auto sdir = split_dir(dir, split);
    std::filesystem::create_directories(sdir);
    BinaryWriter points(sdir / "points.bin");
    BinaryWriter views(sdir / "views.bin");
    BinaryWriter labels(sdir / "labels.bin");
    const auto count = static_cast<std::uint32_t>(objects.size());
    write_header(points, count);
    write_header(views, count);
    write_header(labels, count);

    for (std::size_t start = 0; start < objects.size(); start += kChunk) {
      const std::size_t end = std::min(objects.size(), start + kChunk);
      std::vector<Triplet> chunk(end - start);
      // Objects are pure functions of (manifest, category, index); the writer
      // below consumes them in order.
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(end - start);
           ++i) {
        const auto& [cat, index] = objects[start + static_cast<std::size_t>(i)];
        chunk[static_cast<std::size_t>(i)] =
            make_triplet(m, *cat, split, index);
      }
      for (const Triplet& t : chunk) {
        const Mat<float> p = t.points.cast<float>();
        points.f32s({p.data(), static_cast<std::size_t>(p.size())});
        for (const auto& img : t.views.images) {
          views.f32s({img.data(), static_cast<std::size_t>(img.size())});
        }
        labels.u32(t.category_id);
        labels.u32(static_cast<std::uint32_t>(t.caption.size()));
        labels.bytes(t.caption.data(), t.caption.size());
      }
    }
    points.close();
    views.close();
    labels.close();
  }
  save_manifest(m, dir);
  return m;
}

SplitData load_split(const std::filesystem::path& dir,
                     const DatasetManifest& m, Split split, bool load_views) {
  const auto sdir = split_dir(dir, split);
  const std::uint32_t n = m.count(split);
  SplitData d;
  d.split = split;

  {
    BinaryReader r(sdir / "labels.bin");
    read_header(r, n);
    d.labels.reserve(n);
    d.captions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t cat = r.u32();
      if (cat >= m.categories.size()) {
        throw FormatError("label out of range in " + r.path().string());
      }
      d.labels.push_back(cat);
      d.captions.push_back(r.string(r.u32()));
    }
  }
  {
    BinaryReader r(sdir / "points.bin");
    read_header(r, n);
    d.points.resize(static_cast<Eigen::Index>(n) * m.points, 6);
    r.f32s({d.points.data(), static_cast<std::size_t>(d.points.size())});
  }
  const auto views_path = sdir / "views.bin";
  if (load_views && std::filesystem::exists(views_path)) {
    BinaryReader r(views_path);
    read_header(r, n);
    Mat<float> v(static_cast<Eigen::Index>(n) * m.views,
                 2 * m.height * m.width);
    r.f32s({v.data(), static_cast<std::size_t>(v.size())});
    d.views = std::move(v);
  }
  return d;
}

}  // namespace mixcon
