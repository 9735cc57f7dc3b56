#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "coloseo/data_model.hpp"
#include "coloseo/network.hpp"
#include "test_helpers.hpp"

using namespace coloseo;
using testutil::TempDir;

namespace {

std::string cli_path() {
  const char* p = std::getenv("COLOSEO_CLI");
  REQUIRE_MESSAGE(p != nullptr, "COLOSEO_CLI must point at the coloseo binary");
  return p;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string capture(const std::string& args) {
  TempDir dir("cli_capture");
  const std::string out_file = dir.file("out.txt");
  const std::string cmd = cli_path() + " " + args + " > " + out_file + " 2>&1";
  const int rc = std::system(cmd.c_str());  // status checked via run() where it matters
  (void)rc;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), ("missing file: " + path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_synth_args(const TempDir& dir, int seed) {
  std::ofstream cfg(dir.file("config.json"));
  cfg << R"({"K":2,"num_private":1,"D":4,"c":3,"samples_per_class":8,)"
      << R"("H":8,"F":8,"P":4,"stage1_epochs":2,"stage2_epochs":2,"b":4})";
  cfg.close();
  return "--config " + dir.file("config.json") + " --seed " + std::to_string(seed);
}

}  // namespace

TEST_CASE("synth: manifests parse back and repeat byte-identically") {
  TempDir dir("cli_synth");
  const std::string common = small_synth_args(dir, 5);
  REQUIRE(run("synth " + common + " --out " + dir.file("a")) == 0);
  REQUIRE(run("synth " + common + " --out " + dir.file("b")) == 0);

  const Dataset source = load_manifest(dir.file("a") + "/source.jsonl");
  const Dataset target = load_manifest(dir.file("a") + "/target.jsonl");
  CHECK(source.size() == 16);
  CHECK(target.size() == 24);
  CHECK(source.num_shared_classes() == 2);

  for (const char* name : {"/source.jsonl", "/target.jsonl", "/ground_truth.json",
                           "/effective_config.json"}) {
    CHECK(file_bytes(dir.file("a") + name) == file_bytes(dir.file("b") + name));
  }
}

TEST_CASE("train: zero-epoch run writes a checkpoint equal to initialization") {
  TempDir dir("cli_train0");
  std::ofstream cfg(dir.file("config.json"));
  cfg << R"({"K":2,"num_private":1,"D":4,"c":3,"samples_per_class":8,)"
      << R"("H":8,"F":8,"P":4,"stage1_epochs":0,"stage2_epochs":0,"b":4})";
  cfg.close();
  const std::string common = "--config " + dir.file("config.json") + " --seed 3";
  REQUIRE(run("synth " + common + " --out " + dir.file("data")) == 0);
  REQUIRE(run("train " + common + " --source " + dir.file("data/source.jsonl") +
              " --target " + dir.file("data/target.jsonl") + " --out " + dir.file("run")) == 0);

  const ModelParams trained = load_params(dir.file("run/checkpoint"));
  const ModelParams fresh = init_params(trained.dims, 3);
  CHECK(flatten(trained) == flatten(fresh));
}

TEST_CASE("train twice with one seed: byte-identical checkpoint and history") {
  TempDir dir("cli_det");
  const std::string common = small_synth_args(dir, 11);
  REQUIRE(run("synth " + common + " --out " + dir.file("data")) == 0);
  const std::string train_args = "train " + common + " --source " +
                                 dir.file("data/source.jsonl") + " --target " +
                                 dir.file("data/target.jsonl");
  REQUIRE(run(train_args + " --out " + dir.file("r1")) == 0);
  REQUIRE(run(train_args + " --out " + dir.file("r2")) == 0);
  CHECK(file_bytes(dir.file("r1/checkpoint.bin")) == file_bytes(dir.file("r2/checkpoint.bin")));
  CHECK(file_bytes(dir.file("r1/checkpoint.json")) == file_bytes(dir.file("r2/checkpoint.json")));
  CHECK(file_bytes(dir.file("r1/history.json")) == file_bytes(dir.file("r2/history.json")));
}

TEST_CASE("missing manifest fails with the path in the message") {
  TempDir dir("cli_missing");
  const std::string out = capture("train --seed 1 --source " + dir.file("absent.jsonl") +
                                  " --target " + dir.file("absent.jsonl") + " --out " +
                                  dir.file("run"));
  CHECK(out.find("absent.jsonl") != std::string::npos);
  CHECK(run("train --seed 1 --source " + dir.file("absent.jsonl") + " --target " +
            dir.file("absent.jsonl") + " --out " + dir.file("run")) != 0);
}

TEST_CASE("seed is mandatory for synth and train") {
  TempDir dir("cli_seed");
  CHECK(run("synth --out " + dir.file("x")) != 0);
  CHECK(run("train --source a --target b --out " + dir.file("x")) != 0);
}

TEST_CASE("eval: emits parseable json, repeat runs byte-identical") {
  TempDir dir("cli_eval");
  const std::string common = small_synth_args(dir, 7);
  REQUIRE(run("synth " + common + " --out " + dir.file("data")) == 0);
  REQUIRE(run("train " + common + " --source " + dir.file("data/source.jsonl") +
              " --target " + dir.file("data/target.jsonl") + " --out " + dir.file("run")) == 0);

  const std::string eval_args = "eval --checkpoint " + dir.file("run/checkpoint") +
                                " --target " + dir.file("data/target.jsonl") + " --source " +
                                dir.file("data/source.jsonl");
  REQUIRE(run(eval_args + " --out " + dir.file("e1")) == 0);
  REQUIRE(run(eval_args + " --out " + dir.file("e2")) == 0);
  CHECK(file_bytes(dir.file("e1/metrics.json")) == file_bytes(dir.file("e2/metrics.json")));

  const std::string js = file_bytes(dir.file("e1/metrics.json"));
  CHECK(js.find("\"hos\"") != std::string::npos);
  CHECK(js.find("\"pseudo_all_acc\"") != std::string::npos);

  SUBCASE("missing checkpoint is a named error") {
    const std::string out = capture("eval --checkpoint " + dir.file("nope") + " --target " +
                                    dir.file("data/target.jsonl") + " --out " + dir.file("e3"));
    CHECK(out.find("nope") != std::string::npos);
  }
}

TEST_CASE("re-running from the echoed config reproduces the run") {
  TempDir dir("cli_echo");
  const std::string common = small_synth_args(dir, 13);
  REQUIRE(run("synth " + common + " --out " + dir.file("data")) == 0);
  REQUIRE(run("train " + common + " --source " + dir.file("data/source.jsonl") +
              " --target " + dir.file("data/target.jsonl") + " --out " + dir.file("r1")) == 0);
  // second run driven purely by the echoed effective config
  REQUIRE(run("train --config " + dir.file("r1/effective_config.json") +
              " --seed 13 --source " + dir.file("data/source.jsonl") + " --target " +
              dir.file("data/target.jsonl") + " --out " + dir.file("r2")) == 0);
  CHECK(file_bytes(dir.file("r1/checkpoint.bin")) == file_bytes(dir.file("r2/checkpoint.bin")));
  CHECK(file_bytes(dir.file("r1/history.json")) == file_bytes(dir.file("r2/history.json")));
}

TEST_CASE("gradcheck: passes clean, fails under fault injection, lists every loss once") {
  const std::string out = capture("gradcheck --seed 2");
  for (const char* name : {"sup", "aug", "temp", "cross", "open", "total"}) {
    std::size_t first = out.find(name);
    CHECK(first != std::string::npos);
    if (first != std::string::npos) {
      CHECK(out.find(std::string(name) + " ", first + 1) == std::string::npos);
    }
  }
  CHECK(run("gradcheck --seed 2") == 0);
  CHECK(run("gradcheck --seed 2 --inject-fault") != 0);
}

TEST_CASE("sweep-gamma: single-point grid and monotone rejection rate") {
  TempDir dir("cli_sweep");
  const std::string common = small_synth_args(dir, 17);
  REQUIRE(run("synth " + common + " --out " + dir.file("data")) == 0);
  REQUIRE(run("train " + common + " --source " + dir.file("data/source.jsonl") +
              " --target " + dir.file("data/target.jsonl") + " --out " + dir.file("run")) == 0);

  const std::string sweep_args = "sweep-gamma --checkpoint " + dir.file("run/checkpoint") +
                                 " --source " + dir.file("data/source.jsonl") + " --target " +
                                 dir.file("data/target.jsonl");
  REQUIRE(run(sweep_args + " --gamma-steps 1 --out " + dir.file("s1")) == 0);
  const std::string one = file_bytes(dir.file("s1/sweep.json"));
  CHECK(one.find("\"gamma\": -1.0") != std::string::npos);

  REQUIRE(run(sweep_args + " --gamma-steps 21 --out " + dir.file("s2")) == 0);
  const std::string js = file_bytes(dir.file("s2/sweep.json"));
  // crude parse: rejection_rate values must be non-decreasing down the grid
  std::vector<double> rates;
  std::size_t at = 0;
  const std::string key = "\"rejection_rate\": ";
  while ((at = js.find(key, at)) != std::string::npos) {
    at += key.size();
    rates.push_back(std::stod(js.substr(at)));
  }
  REQUIRE(rates.size() == 21);
  for (std::size_t i = 1; i < rates.size(); ++i) CHECK(rates[i] >= rates[i - 1]);
  CHECK(rates.front() == 0.0);  // gamma -1 accepts everything (no sim is <= -1 here)
  CHECK(rates.back() == 1.0);   // gamma 1 rejects everything
}
