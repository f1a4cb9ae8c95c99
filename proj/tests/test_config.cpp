#include "mixcon/cli.hpp"
#include "mixcon/config.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mixcon;

namespace {

int run(std::vector<std::string> args, std::string* out = nullptr,
        std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = cli::dispatch(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST(Config, DumpParsesBackToSameText) {
  RunConfig c;
  c.seed = 77;
  c.train.model.fusion = FusionMode::kMaxPoolFc;
  c.train.base_lr = 3.3e-4;
  c.train.eval_schemes = {Scheme::kEnsemble, Scheme::kImage};
  const std::string text = dump_config(c);
  RunConfig back;
  apply_config_text(back, text, "dump");
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.train.model.fusion, FusionMode::kMaxPoolFc);
  EXPECT_EQ(back.train.base_lr, 3.3e-4);
  EXPECT_EQ(*back.seed, 77u);
}

TEST(Config, EveryKeyIsDumped) {
  const std::string text = dump_config(RunConfig{});
  for (const auto& k : config_keys()) {
    const auto dot = k.find('.');
    EXPECT_NE(text.find("[" + k.substr(0, dot) + "]"), std::string::npos) << k;
    EXPECT_NE(text.find("\n" + k.substr(dot + 1) + " = "), std::string::npos) << k;
  }
}

TEST(Config, SectionAndDottedForms) {
  RunConfig c;
  apply_config_text(c,
                    "# comment\n[train]\nepochs = 7   ; trailing\n"
                    "model.post_width = 48\n[loss].i_t = false\n",
                    "t");
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.train.model.post_width, 48);
  EXPECT_FALSE(c.train.flags.i_t);
}

TEST(Config, UnknownKeyNamesIt) {
  RunConfig c;
  try {
    apply_config_text(c, "[train]\nepochz = 3\n", "f.ini");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("train.epochz"), std::string::npos) << w;
    EXPECT_NE(w.find("f.ini:2"), std::string::npos) << w;
  }
}

TEST(Config, BadValuesRejected) {
  RunConfig c;
  EXPECT_THROW(set_config_value(c, "train.epochs", "3x"), ConfigError);
  EXPECT_THROW(set_config_value(c, "model.sculptor", "maybe"), ConfigError);
  EXPECT_THROW(set_config_value(c, "model.fusion", "median"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "epochs = 3\n", "t"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "[train\n", "t"), ConfigError);
}

TEST(Config, ResolveCopiesSeedAndWidth) {
  RunConfig c;
  c.seed = 9;
  c.train.model.embed_dim = 32;
  c.resolve();
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.teacher.seed, 9u);
  EXPECT_EQ(c.teacher.embed_dim, 32);
}

TEST(Config, DigestFollowsContent) {
  RunConfig a, b;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.train.epochs = 31;
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Cli, NoArgumentsIsUsage) {
  std::string err;
  EXPECT_EQ(run({}, nullptr, &err), cli::kExitUsage);
  EXPECT_NE(err.find("gen"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsage) {
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
}

TEST(Cli, DumpDefaults) {
  std::string out;
  EXPECT_EQ(run({"train", "--dump-defaults"}, &out), cli::kExitOk);
  EXPECT_EQ(out, dump_config(RunConfig{}));
}

TEST(Cli, SeedRequired) {
  std::string err;
  EXPECT_EQ(run({"gradcheck"}, nullptr, &err), cli::kExitUsage);
  EXPECT_NE(err.find("seed"), std::string::npos);
}

TEST(Cli, GradcheckReportsAndPasses) {
  std::string out;
  EXPECT_EQ(run({"gradcheck", "--seed", "1", "--eps", "1e-5", "--coords", "20"}, &out),
            cli::kExitOk);
  const auto j = nlohmann::json::parse(out);
  EXPECT_LE(j["max_rel_error"].get<double>(), 1e-4);
  EXPECT_TRUE(j["pass"].get<bool>());
}

TEST(Cli, UnknownConfigKeyIsUsage) {
  const fs::path p = fs::temp_directory_path() / "mixcon_test_bad.ini";
  std::ofstream(p) << "[train]\nspeed = 3\n";
  std::string err;
  EXPECT_EQ(run({"gradcheck", "--seed", "1", "--config", p.string()}, nullptr, &err),
            cli::kExitUsage);
  EXPECT_NE(err.find("train.speed"), std::string::npos);
  fs::remove(p);
}

TEST(Cli, MissingDataIsRuntimeError) {
  EXPECT_EQ(run({"calibrate", "--seed", "1", "--data", "/nonexistent/mixcon"}),
            cli::kExitRuntime);
}
