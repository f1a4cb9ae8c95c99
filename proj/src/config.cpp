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


#include "mixcon/config.hpp"

#include "mixcon/binio.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mixcon {
namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v,
                            const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" +
                    v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
Field num(std::string key, T& (*ref)(RunConfig&)) {
  auto get = [ref](const RunConfig& c) {
    const T v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) {
      return fmt(static_cast<double>(v));
    } else {
      return std::to_string(v);
    }
  };
  auto set = [ref, key](RunConfig& c, const std::string& v) {
    ref(c) = parse_number<T>(key, v);
  };
  return {std::move(key), get, set};
}

Field flag(std::string key, bool& (*ref)(RunConfig&)) {
  return {key,
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) {
            ref(c) = parse_bool(key, v);
          }};
}

template <typename E>
Field choice(std::string key, E& (*ref)(RunConfig&), E (*parse)(std::string_view)) {
  return {key,
          [ref](const RunConfig& c) {
            return std::string(to_string(ref(const_cast<RunConfig&>(c))));
          },
          [ref, parse](RunConfig& c, const std::string& v) { ref(c) = parse(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"run.seed",
                 [](const RunConfig& c) {
                   return c.seed ? std::to_string(*c.seed) : std::string();
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty()) {
                     c.seed.reset();
                   } else {
                     c.seed = parse_number<std::uint64_t>("run.seed", v);
                   }
                 }});
    f.push_back(num<int>("data.train_categories",
                         [](RunConfig& c) -> int& { return c.data.train_categories; }));
    f.push_back(num<int>("data.zeroshot_categories",
                         [](RunConfig& c) -> int& { return c.data.zeroshot_categories; }));
    f.push_back(num<int>("data.objects_per_category",
                         [](RunConfig& c) -> int& { return c.data.objects_per_category; }));
    f.push_back(num<int>("data.eval_in_per_category",
                         [](RunConfig& c) -> int& { return c.data.eval_in_per_category; }));
    f.push_back(num<int>("data.points", [](RunConfig& c) -> int& { return c.data.points; }));
    f.push_back(num<int>("data.views", [](RunConfig& c) -> int& { return c.data.views; }));
    f.push_back(num<int>("data.height", [](RunConfig& c) -> int& { return c.data.height; }));
    f.push_back(num<int>("data.width", [](RunConfig& c) -> int& { return c.data.width; }));
    f.push_back(num<double>("data.noise_sigma",
                            [](RunConfig& c) -> double& { return c.data.noise_sigma; }));

    f.push_back(num<int>("teacher.feature_dim",
                         [](RunConfig& c) -> int& { return c.teacher.feature_dim; }));
    f.push_back(num<double>("teacher.ridge",
                            [](RunConfig& c) -> double& { return c.teacher.ridge; }));
    f.push_back(num<int>("teacher.calibration_per_category", [](RunConfig& c) -> int& {
      return c.teacher.calibration_per_category;
    }));

    f.push_back(num<int>("model.embed_dim",
                         [](RunConfig& c) -> int& { return c.train.model.embed_dim; }));
    f.push_back({"model.point_widths",
                 [](const RunConfig& c) {
                   std::string s;
                   for (int w : c.train.model.point_widths) {
                     if (!s.empty()) s += ",";
                     s += std::to_string(w);
                   }
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::vector<int> w;
                   for (const auto& item : split_list(v)) {
                     w.push_back(parse_number<int>("model.point_widths", item));
                   }
                   c.train.model.point_widths = w;
                 }});
    f.push_back(num<int>("model.post_width",
                         [](RunConfig& c) -> int& { return c.train.model.post_width; }));
    f.push_back(choice<FusionMode>(
        "model.fusion", [](RunConfig& c) -> FusionMode& { return c.train.model.fusion; },
        fusion_mode_from_string));
    f.push_back(choice<AdapterScope>(
        "model.adapter_scope",
        [](RunConfig& c) -> AdapterScope& { return c.train.model.adapter_scope; },
        adapter_scope_from_string));
    f.push_back(flag("model.sculptor",
                     [](RunConfig& c) -> bool& { return c.train.model.sculptor; }));

    f.push_back(flag("loss.p_i", [](RunConfig& c) -> bool& { return c.train.flags.p_i; }));
    f.push_back(flag("loss.p_t", [](RunConfig& c) -> bool& { return c.train.flags.p_t; }));
    f.push_back(flag("loss.i_t", [](RunConfig& c) -> bool& { return c.train.flags.i_t; }));
    f.push_back(flag("loss.d3_t", [](RunConfig& c) -> bool& { return c.train.flags.d3_t; }));

    f.push_back(num<int>("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
    f.push_back(num<int>("train.batch_size",
                         [](RunConfig& c) -> int& { return c.train.batch_size; }));
    f.push_back(num<double>("train.base_lr",
                            [](RunConfig& c) -> double& { return c.train.base_lr; }));
    f.push_back(num<int>("train.warmup_epochs",
                         [](RunConfig& c) -> int& { return c.train.warmup_epochs; }));
    f.push_back(num<double>("train.ema_decay",
                            [](RunConfig& c) -> double& { return c.train.ema_decay; }));
    f.push_back(num<int>("train.views",
                         [](RunConfig& c) -> int& { return c.train.views_train; }));
    f.push_back(num<double>("train.weight_decay", [](RunConfig& c) -> double& {
      return c.train.adamw.weight_decay;
    }));
    f.push_back(num<double>("train.beta1",
                            [](RunConfig& c) -> double& { return c.train.adamw.beta1; }));
    f.push_back(num<double>("train.beta2",
                            [](RunConfig& c) -> double& { return c.train.adamw.beta2; }));
    f.push_back(num<double>("train.adam_eps",
                            [](RunConfig& c) -> double& { return c.train.adamw.eps; }));
    f.push_back(num<int>("train.eval_every",
                         [](RunConfig& c) -> int& { return c.train.eval_every; }));
    f.push_back(num<int>("train.eval_views",
                         [](RunConfig& c) -> int& { return c.train.eval_views; }));
    f.push_back({"train.eval_schemes",
                 [](const RunConfig& c) {
                   std::string s;
                   for (Scheme x : c.train.eval_schemes) {
                     if (!s.empty()) s += ",";
                     s += to_string(x);
                   }
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   std::vector<Scheme> out;
                   for (const auto& item : split_list(v)) {
                     out.push_back(scheme_from_string(item));
                   }
                   c.train.eval_schemes = out;
                 }});
    f.push_back(flag("train.use_ema", [](RunConfig& c) -> bool& { return c.train.use_ema; }));

    f.push_back(choice<Split>("eval.split",
                              [](RunConfig& c) -> Split& { return c.eval.split; },
                              split_from_string));
    f.push_back(choice<Scheme>("eval.scheme",
                               [](RunConfig& c) -> Scheme& { return c.eval.scheme; },
                               scheme_from_string));
    f.push_back(num<int>("eval.views", [](RunConfig& c) -> int& { return c.eval.views; }));
    f.push_back(num<int>("eval.k", [](RunConfig& c) -> int& { return c.eval.k; }));

    f.push_back({"ablate.grid", [](const RunConfig& c) { return c.ablate.grid; },
                 [](RunConfig& c, const std::string& v) { c.ablate.grid = v; }});
    f.push_back(num<int>("ablate.seeds", [](RunConfig& c) -> int& { return c.ablate.seeds; }));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::resolve() {
  if (seed) {
    teacher.seed = *seed;
    train.seed = *seed;
  }
  teacher.embed_dim = train.model.embed_dim;
}

void RunConfig::validate() const {
  data.validate();
  teacher.validate();
  train.validate();
  if (eval.views < 1) throw ConfigError("eval.views must be >= 1");
  if (eval.k < 1) throw ConfigError("eval.k must be >= 1");
  if (ablate.seeds < 1) throw ConfigError("ablate.seeds must be >= 1");
  if (train.views_train > data.views) {
    throw ConfigError("train.views exceeds data.views");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

void set_config_value(RunConfig& cfg, const std::string& key,
                      const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.find(key) != std::string::npos) throw;
        throw ConfigError("config key '" + key + "': " + what);
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text,
                       const std::string& origin) {
  std::string section;
  std::istringstream in{std::string(text)};
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno);
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) {
        throw ConfigError(where + ": unterminated section header");
      }
      std::string rest = trim(line.substr(close + 1));
      section = trim(line.substr(1, close - 1));
      if (rest.empty()) continue;
      // "[section].key = value" on one line
      if (rest.front() != '.') throw ConfigError(where + ": junk after section");
      line = rest.substr(1);
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        throw ConfigError(where + ": key '" + key + "' outside any section");
      }
      key = section + "." + key;
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

Digest config_digest(const RunConfig& cfg) { return sha256(dump_config(cfg)); }

}  // namespace mixcon
