#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "ssda2/config.hpp"
#include "ssda2/data.hpp"

using namespace ssda2;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the installed binary with `args` inside `dir`; returns the exit
/// code and captures both streams.
int run_cli(const std::string& args, const fs::path& dir, std::string* out = nullptr,
            std::string* err = nullptr, const std::string& env_prefix = "") {
  const std::string cmd = "cd \"" + dir.string() + "\" && " + env_prefix + "\"" +
                          SSDA2_BIN_PATH + "\" " + args + " > cli_stdout.txt 2> cli_stderr.txt";
  const int rc = std::system(cmd.c_str());
  if (out) *out = slurp(dir / "cli_stdout.txt");
  if (err) *err = slurp(dir / "cli_stderr.txt");
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

AppConfig scrambled_config() {
  AppConfig c;
  c.i2i.weights = {1.5, 2.25, 0.125, 7.0, 0.3333333333333333};
  c.i2i.gen.encoder.block_channels = {8, 12, 16, 24};
  c.i2i.gen.adain_skips = false;
  c.i2i.per.block_channels = {4, 8, 12};
  c.i2i.per.tap_block = 2;
  c.i2i.per.weights_path = "weights/custom.bin";
  c.i2i.batch_size = 3;
  c.i2i.base_lr = 0.0123456789012345;
  c.i2i.poly_power = 0.875;
  c.i2i.total_iters = 777;
  c.i2i.seed = 123456789012345ULL;
  c.i2i.optimizer = "adam";
  c.i2i.momentum = 0.75;
  c.i2i.max_grad_norm = 2.5;
  c.i2i.per_anchor_contrastive = true;
  c.i2i.ckpt_every = 33;
  c.seg.block_channels = {6, 10, 14, 18};
  c.seg.batch_size = 5;
  c.seg.base_lr = 0.00321;
  c.seg.poly_power = 0.8;
  c.seg.total_iters = 999;
  c.seg.seed = 42;
  c.seg.optimizer = "adam";
  c.seg.momentum = 0.65;
  c.seg.max_grad_norm = 4.5;
  c.seg.ckpt_every = 11;
  c.exp_seeds = {9, 8, 7, 6};
  c.exp_data_seed = 314159;
  c.exp_side = 48;
  c.exp_n_labeled = 12;
  c.exp_n_unlabeled = 11;
  c.exp_n_eval = 10;
  c.exp_augment_p = 0.375;
  c.exp_shifted = false;
  return c;
}

}  // namespace

TEST_CASE("an empty config file yields the documented defaults") {
  const AppConfig c = parse_config_text("");
  CHECK(c == AppConfig{});
  CHECK(c.i2i.weights.l_rec == 50.0);
  CHECK(c.i2i.weights.l_adv == 5.0);
  CHECK(c.i2i.weights.l_cyc == 50.0);
  CHECK(c.i2i.weights.l_per == 1.0);
  CHECK(c.i2i.weights.l_con == 1.0);
  CHECK(c.i2i.batch_size == 8);
  CHECK(c.i2i.base_lr == 0.01);
  CHECK(c.seg.base_lr == 0.001);
  CHECK(c.seg.poly_power == 0.9);
}

TEST_CASE("unknown and ill-formed keys are rejected by name") {
  SUBCASE("unknown key") {
    try {
      parse_config_text("lambda6=1\n");
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("lambda6") != std::string::npos);
    }
  }
  SUBCASE("ill-typed value names the key and the type") {
    try {
      parse_config_text("batch_size=abc\n");
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("batch_size") != std::string::npos);
      CHECK(msg.find("integer") != std::string::npos);
    }
  }
  SUBCASE("range and enum violations") {
    CHECK_THROWS_AS(parse_config_text("batch_size=0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("base_lr=0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("optimizer=rmsprop\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("channels=8,8\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("exp_augment_p=1.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("exp_side=20\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("adain_skips=maybe\n"), std::invalid_argument);
  }
  SUBCASE("missing equals sign") {
    CHECK_THROWS_AS(parse_config_text("batch_size 8\n"), std::invalid_argument);
  }
}

TEST_CASE("comments, blank lines, and spacing are tolerated") {
  const AppConfig c = parse_config_text(
      "# a comment\n"
      "\n"
      "  batch_size = 4  \n"
      "optimizer=adam\n");
  CHECK(c.i2i.batch_size == 4);
  CHECK(c.i2i.optimizer == "adam");
}

TEST_CASE("emit and parse round-trip every field") {
  const AppConfig c = scrambled_config();
  CHECK(parse_config_text(emit_config(c)) == c);
  CHECK(parse_config_text(emit_config(AppConfig{})) == AppConfig{});
}

TEST_CASE("environment seed override applies to both runs") {
  AppConfig c;
  ::setenv("SSDA2_SEED", "7777", 1);
  apply_env_overrides(c);
  CHECK(c.i2i.seed == 7777);
  CHECK(c.seg.seed == 7777);

  ::setenv("SSDA2_SEED", "not-a-seed", 1);
  CHECK_THROWS_AS(apply_env_overrides(c), std::invalid_argument);

  ::unsetenv("SSDA2_SEED");
  AppConfig untouched;
  untouched.i2i.seed = 5;
  apply_env_overrides(untouched);
  CHECK(untouched.i2i.seed == 5);
}

TEST_CASE("the run stamp lands before computation and echoes the config") {
  TempDir tmp("ssda2_cli_stamp");
  const AppConfig c = scrambled_config();
  write_run_stamp((tmp.path / "run").string(), c, "unit-test invocation");
  CHECK(parse_config((tmp.path / "run" / "config.resolved").string()) == c);
  const std::string stamp = slurp(tmp.path / "run" / "run_stamp.txt");
  CHECK(stamp.find(version_string()) != std::string::npos);
  CHECK(stamp.find("unit-test invocation") != std::string::npos);
  CHECK(stamp.find("seed=123456789012345") != std::string::npos);
}

TEST_CASE("dispatch: usage, version, and unknown subcommands") {
  TempDir tmp("ssda2_cli_dispatch");
  std::string out, err;

  CHECK(run_cli("", tmp.path, &out, &err) == 2);
  CHECK(out.find("usage") != std::string::npos);

  CHECK(run_cli("--version", tmp.path, &out, &err) == 0);
  CHECK(out.find(version_string()) != std::string::npos);

  CHECK(run_cli("trnslate", tmp.path, &out, &err) == 2);
  CHECK(err.find("translate") != std::string::npos);

  CHECK(run_cli("train-i2i --out x", tmp.path, &out, &err) == 2);  // missing --data
  CHECK(err.find("error") != std::string::npos);
}

TEST_CASE("dispatch: the data and translation pipeline runs end to end") {
  TempDir tmp("ssda2_cli_pipeline");
  std::string out, err;

  REQUIRE(run_cli("synth-gen --out data --domains 2 --patches 6 --side 16 --seed 3", tmp.path,
                  &out, &err) == 0);
  CHECK(fs::exists(tmp.path / "data" / "config.resolved"));
  CHECK(fs::exists(tmp.path / "data" / "run_stamp.txt"));
  CHECK(fs::exists(tmp.path / "data" / "domains.tsv"));
  const LabeledDataset ds = load_labeled_dataset((tmp.path / "data").string());
  CHECK(ds.patches.size() == 6);
  CHECK(*std::max_element(ds.groups.begin(), ds.groups.end()) == 1);

  std::ofstream cfg(tmp.path / "tiny.cfg");
  cfg << "channels=8,8,8,8\nbatch_size=2\ntotal_iters=3\nckpt_every=0\n"
      << "seg_channels=8,16,32,64\nseg_batch_size=2\nseg_total_iters=4\nseg_ckpt_every=0\n";
  cfg.close();

  REQUIRE(run_cli("train-i2i --config tiny.cfg --data data --out i2i --seed 1", tmp.path, &out,
                  &err) == 0);
  CHECK(fs::exists(tmp.path / "i2i" / "checkpoint.bin"));
  CHECK(fs::exists(tmp.path / "i2i" / "loss_log.tsv"));

  REQUIRE(run_cli("translate --ckpt i2i/checkpoint.bin --content data/patches/p0000.png "
                  "--style data/patches/p0001.png --out tr",
                  tmp.path, &out, &err) == 0);
  CHECK(fs::exists(tmp.path / "tr" / "translated.png"));

  REQUIRE(run_cli("grid --ckpt i2i/checkpoint.bin --data data --n 3 --out gr", tmp.path, &out,
                  &err) == 0);
  CHECK(fs::exists(tmp.path / "gr" / "grid.png"));

  REQUIRE(run_cli("train-seg --config tiny.cfg --data data --out seg --seed 2 "
                  "--augment-ckpt i2i/checkpoint.bin --refs data --augment-p 1.0",
                  tmp.path, &out, &err) == 0);
  CHECK(fs::exists(tmp.path / "seg" / "seg_checkpoint.bin"));

  REQUIRE(run_cli("evaluate --ckpt seg/seg_checkpoint.bin --data data --out ev", tmp.path,
                  &out, &err) == 0);
  CHECK(fs::exists(tmp.path / "ev" / "evaluation.tsv"));
  CHECK(out.find("mean IoU") != std::string::npos);

  SUBCASE("mismatched augmentation flags fail with one line") {
    CHECK(run_cli("train-seg --config tiny.cfg --data data --out seg2 "
                  "--augment-ckpt i2i/checkpoint.bin",
                  tmp.path, &out, &err) == 1);
    CHECK(err.find("error") != std::string::npos);
  }
}

TEST_CASE("dispatch: SSDA2_SEED reaches the run stamp") {
  TempDir tmp("ssda2_cli_envseed");
  std::string out, err;
  REQUIRE(run_cli("synth-gen --out d --patches 4 --side 16", tmp.path, &out, &err,
                  "SSDA2_SEED=99 ") == 0);
  CHECK(slurp(tmp.path / "d" / "run_stamp.txt").find("seed=99") != std::string::npos);
  CHECK(run_cli("synth-gen --out d2 --patches 4 --side 16", tmp.path, &out, &err,
                "SSDA2_SEED=bogus ") == 1);
}

TEST_CASE("dispatch: the miniature experiment emits its artifacts") {
  TempDir tmp("ssda2_cli_experiment");
  std::ofstream cfg(tmp.path / "exp.cfg");
  cfg << "channels=8,8,8,8\nbatch_size=2\ntotal_iters=8\nckpt_every=0\n"
      << "seg_channels=8,16,32,64\nseg_batch_size=2\nseg_total_iters=10\nseg_ckpt_every=0\n"
      << "exp_side=16\nexp_n_labeled=6\nexp_n_unlabeled=5\nexp_n_eval=4\nexp_seeds=1\n";
  cfg.close();
  std::string out, err;
  REQUIRE(run_cli("experiment --config exp.cfg --out exp", tmp.path, &out, &err) == 0);
  CHECK(fs::exists(tmp.path / "exp" / "results.tsv"));
  CHECK(fs::exists(tmp.path / "exp" / "results.png"));
  CHECK(out.find("baseline median") != std::string::npos);
  CHECK(out.find("delta") != std::string::npos);
}
