#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "smad/cli/run_config.hpp"
#include "smad/common/error.hpp"

using namespace smad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("smad_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Run run_cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "output.txt";
  const std::string cmd = std::string(SMAD_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2); }

bool rejects_config(const json& j) {
  try {
    cli::run_config_from_json(j);
  } catch (const Error& e) {
    return e.module() == "cli" && e.code() == ErrorCode::BadConfig;
  }
  return false;
}

}  // namespace

TEST_CASE("shipped default config equals the built-in defaults") {
  const auto c = cli::load_run_config(fs::path(SMAD_SOURCE_DIR) / "configs" / "default.json");
  CHECK(cli::run_config_json(c) == cli::run_config_json(cli::RunConfig{}));
  CHECK(c.detector.fit == eval::SvmFit::CrossFit);
}

TEST_CASE("run config json round trip") {
  cli::RunConfig c;
  c.dims = {4, 12, 12, 12};
  c.healthy = 5;
  c.train.variant = translator::Variant::CnnAttention;
  c.train.epochs = 3;
  c.detector.svm.gamma = 0.25;
  c.detector.fit = eval::SvmFit::HeldOut;
  c.ridge_lambda = 2.5;
  const auto j = cli::run_config_json(c);
  CHECK(cli::run_config_json(cli::run_config_from_json(j)) == j);

  const auto s = c.synth_config();
  CHECK(s.dims == c.dims);
  CHECK(s.n_healthy == 5);
  const auto l = c.loo_config();
  CHECK(l.train.epochs == 3);
  CHECK(l.model.dims == c.dims);
  CHECK(l.ridge_lambda == 2.5);
}

TEST_CASE("partial config overrides only the keys present") {
  const auto c = cli::run_config_from_json({{"train", {{"epochs", 9}}}});
  CHECK(c.train.epochs == 9);
  CHECK(c.train.lr == cli::RunConfig{}.train.lr);
  CHECK(c.healthy == 12);
}

TEST_CASE("bad configs are rejected as usage errors") {
  CHECK(rejects_config({{"train", {{"epoch", 9}}}}));
  CHECK(rejects_config({{"training", json::object()}}));
  CHECK(rejects_config({{"train", {{"epochs", "many"}}}}));
  CHECK(rejects_config({{"train", {{"variant", "transformer"}}}}));
  CHECK(rejects_config({{"train", {{"epochs", 0}}}}));
  CHECK(rejects_config({{"data", {{"dims", {8, 16, 16}}}}}));
  CHECK(rejects_config({{"dsp", {{"n_fft", 1000}}}}));
  CHECK(rejects_config({{"dsp", {{"fmax", 6000.0}}}}));
  CHECK(rejects_config({{"detector", {{"nu", 0.0}}}}));
  CHECK(rejects_config({{"detector", {{"fit", "sometimes"}}}}));
  CHECK(rejects_config({{"data", {{"patients", 3}, {"severity", 0.0}}}}));
  CHECK(rejects_config(json::array()));
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  CHECK(run_cli("--help", dir).code == 0);
  CHECK(run_cli("", dir).code == 1);
  CHECK(run_cli("frobnicate", dir).code == 1);

  const auto zero = run_cli("train --epochs 0", dir);
  CHECK(zero.code == 1);
  CHECK(zero.output.find("--epochs: must be at least 1, got 0") != std::string::npos);

  write_json(dir / "bad.json", {{"train", {{"epoch", 3}}}});
  const auto bad = run_cli("train --config " + (dir / "bad.json").string(), dir);
  CHECK(bad.code == 1);
  CHECK(bad.output.find("unknown key train.epoch") != std::string::npos);

  const auto missing = run_cli("translate --checkpoint " + (dir / "none.anck").string() + " --motion " +
                                   (dir / "none.mfld").string() + " --out " + (dir / "out.mspc").string(),
                               dir);
  CHECK(missing.code == 2);
  CHECK(missing.output.rfind("error: ", 0) == 0);
}

TEST_CASE("synth writes a manifest for a large healthy cohort") {
  const auto dir = scratch("synth");
  write_json(dir / "small.json", {{"data", {{"dims", {2, 8, 8, 8}}}}});
  const auto r = run_cli("synth --config " + (dir / "small.json").string() + " --healthy 36 --patients 3 --out " +
                             (dir / "data").string(),
                         dir);
  REQUIRE(r.code == 0);
  const auto m = synth::read_manifest(dir / "data" / "manifest.json");
  CHECK(m.count(synth::Label::Healthy) == 36);
  CHECK(m.count(synth::Label::Patient) == 3);
  CHECK(fs::exists(dir / "data" / "run_manifest.json"));
  fs::remove_all(dir);
}
