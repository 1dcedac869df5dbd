#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "support.hpp"
#include "xdtl/dataset.hpp"
#include "xdtl/serialize.hpp"

namespace {

int run_cli(const std::string& args, const testing::TempDir& dir) {
  const std::string cmd = std::string(XDTL_CLI) + " " + args + " >" + (dir / "out.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string output(const testing::TempDir& dir) {
  std::ifstream is(dir / "out.txt");
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("argument errors exit with 2") {
  testing::TempDir dir("cli");
  CHECK(run_cli("--help", dir) == 0);
  CHECK(run_cli("", dir) == 2);
  CHECK(run_cli("synth --out " + (dir / "c").string(), dir) == 2);
  CHECK(run_cli("folds --manifest x.json --protocol P3 --seed 1", dir) == 2);
  CHECK(run_cli("frobnicate", dir) == 2);
}

TEST_CASE("synth, folds, extract, train, eval and report") {
  testing::TempDir dir("cli");
  const auto corpus = (dir / "c").string();
  const auto manifest = (dir / "c" / "manifest.json").string();
  REQUIRE(run_cli("synth --out " + corpus + " --subjects 10 --distractors 5 --seed 3", dir) == 0);

  REQUIRE(run_cli("folds --manifest " + manifest + " --protocol P2 --seed 1 --out " + (dir / "plan.json").string(),
                  dir) == 0);
  std::ifstream plan_in(dir / "plan.json");
  const auto plan = nlohmann::json::parse(plan_in);
  CHECK(plan.at("protocol") == "P2");
  CHECK(plan.at("folds").size() == 5);

  REQUIRE(run_cli("extract --manifest " + manifest + " --kind hog --out " + (dir / "hog.xfml").string(), dir) == 0);
  const auto X = xdtl::io::load_matrix(dir / "hog.xfml");
  CHECK(X.rows() == 1764);
  CHECK(X.cols() == 45);

  REQUIRE(run_cli("train --manifest " + manifest + " --method sstl_hog --fold 0 --seed 2 --out " +
                      (dir / "m.xfml").string(),
                  dir) == 0);
  CHECK(xdtl::io::sniff(dir / "m.xfml") == xdtl::io::ContainerKind::coupled);
  CHECK(xdtl::io::sniff(dir / "m.proj.xfml") == xdtl::io::ContainerKind::matrix);
  REQUIRE(run_cli("train --manifest " + manifest + " --method dl --seed 2 --out " + (dir / "d.xfml").string(),
                  dir) == 0);
  CHECK(xdtl::io::sniff(dir / "d.xfml") == xdtl::io::ContainerKind::dictionary);
  CHECK(run_cli("train --manifest " + manifest + " --method hog --seed 2 --out " + (dir / "x.xfml").string(),
                dir) == 2);

  REQUIRE(run_cli("eval --manifest " + manifest + " --methods pixels,hog --seed 4 --out " +
                      (dir / "ev").string(),
                  dir) == 0);
  CHECK(std::filesystem::exists(dir / "ev" / "hog" / "results.json"));
  CHECK(std::filesystem::exists(dir / "ev" / "pixels" / "cmc.csv"));
  REQUIRE(run_cli("report " + (dir / "ev" / "hog").string() + " " + (dir / "ev" / "pixels" / "results.json").string(),
                  dir) == 0);
  CHECK(output(dir).find("pixels") != std::string::npos);
}

TEST_CASE("data errors exit with 3") {
  testing::TempDir dir("cli");
  CHECK(run_cli("folds --manifest " + (dir / "none.json").string() + " --protocol P1 --seed 1", dir) == 3);
  std::ofstream(dir / "bad.json") << "[{\"sample_id\": 3}]";
  CHECK(run_cli("folds --manifest " + (dir / "bad.json").string() + " --protocol P1 --seed 1", dir) == 3);
  CHECK(run_cli("report " + (dir / "bad.json").string(), dir) == 3);

  REQUIRE(run_cli("synth --out " + (dir / "c").string() + " --subjects 5 --seed 3", dir) == 0);
  CHECK(run_cli("folds --manifest " + (dir / "c" / "manifest.json").string() + " --protocol P2 --seed 1", dir) == 3);
}

TEST_CASE("numerical failures exit with 4") {
  testing::TempDir dir("cli");
  REQUIRE(run_cli("synth --out " + (dir / "c").string() + " --subjects 10 --seed 3", dir) == 0);
  // Without a ridge and without reduction the W normal equations are singular.
  std::ofstream(dir / "cfg.json")
      << R"({"transform":{"reduce_dim":0,"rho":0,"tau":2,"max_iters":1,"sup_iters":1}})";
  CHECK(run_cli("train --manifest " + (dir / "c" / "manifest.json").string() +
                    " --method sstl_hog --fold 0 --seed 1 --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "m.xfml").string(),
                dir) == 4);
  CHECK(output(dir).find("increase rho") != std::string::npos);
}

}
