// SPDX-License-Identifier: Apache-2.0
// Drives the `pg` executable end to end through std::system.
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "pg_test_cli";

int run(const std::string &args) {
  const std::string cmd = std::string(PG_BINARY) + " " + args + " > " +
                          (kWork / "stdout.txt").string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const fs::path &p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string &line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');)
    f.push_back(x);
  return f;
}

fs::path write_config(const std::string &name, const std::string &body) {
  const fs::path p = kWork / name;
  std::ofstream(p) << body;
  return p;
}

std::string mlp_config(const std::string &extra = {}) {
  return "[experiment]\nmodel = mlp\ndataset = " + std::string(PG_DATA_DIR) +
         "/mnist5k\neval_limit = 300\n"
         "[train]\nepochs = 2\nbatch_size = 64\nlr = 0.05\nmomentum = 0.9\n"
         "train_limit = 640\nseed = 3\n"
         "[sweep]\nthresholds = -1000000000, -1, 0, 1, 1000000000\n"
         "[bench]\ndims = 16x32x64\nsparsities = 0, 0.9\nrepeats = 3\n" +
         extra;
}

struct Fixture {
  Fixture() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

} // namespace

TEST_CASE_FIXTURE(Fixture, "usage and configuration errors exit with status 2") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("train") == 2);
  CHECK(run("frobnicate --config x.ini") == 2);
  CHECK(run("train --config " + (kWork / "absent.ini").string()) == 2);

  const auto unknown = write_config("unknown.ini", mlp_config("[maps]\nwarmup = 3\n"));
  CHECK(run("train --config " + unknown.string()) == 2);
  CHECK(slurp(kWork / "stderr.txt").find("unknown key 'warmup'") != std::string::npos);

  const auto bad = write_config("bad.ini", mlp_config("[pg]\nbits = 4.5\n"));
  CHECK(run("train --config " + bad.string()) == 2);

  const auto nodata = write_config("nodata.ini", "[experiment]\nmodel = mlp\ndataset = /no/such\n");
  CHECK(run("train --config " + nodata.string()) == 2);

  const auto ok = write_config("ok.ini", mlp_config());
  CHECK(run("train --config " + ok.string() + " --threads 0") == 2);
}

TEST_CASE_FIXTURE(Fixture, "runtime failures exit with status 1") {
  const auto ok = write_config("ok.ini", mlp_config());
  CHECK(run("eval --config " + ok.string() + " --out " + (kWork / "empty").string()) == 1);
  CHECK_FALSE(slurp(kWork / "stderr.txt").empty());
}

TEST_CASE_FIXTURE(Fixture, "train, eval, sweep, bench and export-maps") {
  const auto cfg = write_config("mlp.ini", mlp_config());
  const fs::path out = kWork / "run";
  REQUIRE(run("train --config " + cfg.string() + " --out " + out.string()) == 0);

  const auto metrics = lines(out / "metrics.csv");
  REQUIRE(metrics.size() == 3);
  CHECK(metrics[0] == "epoch,B,B_hb,Sp,B_avg,accuracy,loss,train_loss");
  CHECK(fields(metrics[1])[0] == "1");
  CHECK(fields(metrics[2])[0] == "2");
  CHECK(lines(out / "layers.csv").size() == 3);
  CHECK(fs::exists(out / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(out / "config.ini"));

  // The written config reproduces itself.
  REQUIRE(run("train --config " + (out / "config.ini").string() + " --out " +
              (kWork / "again").string()) == 0);
  CHECK(slurp(kWork / "again" / "metrics.csv") == slurp(out / "metrics.csv"));
  const auto c1 = lines(out / "config.ini"), c2 = lines(kWork / "again" / "config.ini");
  REQUIRE(c1.size() == c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i)
    if (c1[i].rfind("output =", 0) != 0)
      CHECK(c1[i] == c2[i]);

  REQUIRE(run("eval --config " + cfg.string() + " --out " + out.string()) == 0);
  const auto eval = lines(out / "eval.csv");
  REQUIRE(eval.size() == 2);
  CHECK(eval[0] == metrics[0]);
  CHECK(eval[1] == metrics[2]);

  REQUIRE(run("sweep --config " + cfg.string() + " --out " + out.string()) == 0);
  const auto sweep = lines(out / "sweep.csv");
  REQUIRE(sweep.size() == 6);
  CHECK(sweep[0] == "B,B_hb,threshold,Sp,B_avg,accuracy");
  double prev_sp = -1.0;
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const double sp = std::stod(fields(sweep[i])[3]);
    CHECK(sp >= prev_sp);
    prev_sp = sp;
  }
  CHECK(fields(sweep[1])[3] == "0");
  CHECK(fields(sweep[5])[3] == "1");
  CHECK(fields(sweep[1])[4] == "4");
  CHECK(fields(sweep[5])[4] == "2");

  REQUIRE(run("bench --config " + cfg.string() + " --out " + out.string()) == 0);
  const auto bench = lines(out / "bench.csv");
  REQUIRE(bench.size() == 4);
  CHECK(bench[0] == "kernel,M,K,N,sparsity,threads,time_ms,speedup");

  // Decision maps need a gated convolution.
  CHECK(run("export-maps --config " + cfg.string() + " --out " + out.string()) == 1);
}

TEST_CASE_FIXTURE(Fixture, "export-maps writes one image per example") {
  const auto cfg = write_config(
      "cnn.ini", "[experiment]\nmodel = cnn\ndataset = " + std::string(PG_DATA_DIR) +
                     "/mnist5k\n[maps]\nlayer = 3\ncount = 3\n");
  const fs::path out = kWork / "maps_run";
  REQUIRE(run("export-maps --config " + cfg.string() + " --out " + out.string()) == 1);

  // Without a checkpoint the command fails; train a tiny one first.
  const auto tiny = write_config(
      "tiny.ini", "[experiment]\nmodel = cnn\ndataset = " + std::string(PG_DATA_DIR) +
                      "/mnist5k\neval_limit = 50\n[train]\nepochs = 1\ntrain_limit = 64\n"
                      "[maps]\nlayer = 3\ncount = 3\n");
  REQUIRE(run("train --config " + tiny.string() + " --out " + out.string()) == 0);
  REQUIRE(run("export-maps --config " + tiny.string() + " --out " + out.string()) == 0);
  for (int i = 0; i < 3; ++i) {
    const fs::path p = out / "maps" / ("layer03_ex000" + std::to_string(i) + ".pgm");
    REQUIRE(fs::exists(p));
    CHECK(slurp(p).rfind("P5\n7 7\n255\n", 0) == 0);
  }
  CHECK_FALSE(fs::exists(out / "maps" / "layer03_ex0003.pgm"));
}
