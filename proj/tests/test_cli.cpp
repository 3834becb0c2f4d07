#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pencilrank/json_io.hpp"
#include "pencilrank/pencil.hpp"

using namespace pencilrank;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = PENCILRANK_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "pencilrank_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args) {
  fs::path out = work_dir() / "stdout.txt";
  std::string cmd = kCli + " " + args + " > " + out.string() + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.stdout_text = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen random is byte-identical across runs") {
  fs::path f1 = work_dir() / "r1.json";
  fs::path f2 = work_dir() / "r2.json";
  CHECK(run("gen random --m 3 --n 5 --seed 7 " + f1.string()).exit_code == 0);
  CHECK(run("gen random --m 3 --n 5 --seed 7 " + f2.string()).exit_code == 0);
  std::string s1 = slurp(f1), s2 = slurp(f2);
  CHECK(!s1.empty());
  CHECK(s1 == s2);
}

TEST_CASE("decompose a 3x3 tensor within the bound") {
  fs::path t = work_dir() / "t33.json";
  fs::path d = work_dir() / "d33.json";
  REQUIRE(run("gen random --m 3 --n 3 --seed 1 " + t.string()).exit_code == 0);
  RunResult r = run("decompose " + t.string() + " " + d.string() + " --seed 1");
  CHECK(r.exit_code == 0);
  Decomposition D = read_decomposition_file(d.string());
  CHECK(D.term_count() <= 4);
  json payload = json::parse(r.stdout_text);
  CHECK(payload["status"] == "ok");
  CHECK(payload["payload"]["max_rank_bound"] == 4);
  CHECK(payload["payload"]["residual"].get<double>() <= 1e-8);
}

TEST_CASE("decompose output bytes are deterministic for a fixed seed") {
  fs::path t = work_dir() / "t44.json";
  fs::path d1 = work_dir() / "d44a.json";
  fs::path d2 = work_dir() / "d44b.json";
  REQUIRE(run("gen random --m 4 --n 4 --seed 3 " + t.string()).exit_code == 0);
  REQUIRE(run("decompose " + t.string() + " " + d1.string() + " --seed 5").exit_code == 0);
  REQUIRE(run("decompose " + t.string() + " " + d2.string() + " --seed 5").exit_code == 0);
  CHECK(slurp(d1) == slurp(d2));
}

TEST_CASE("malformed input exits 2") {
  fs::path bad = work_dir() / "bad.json";
  std::ofstream(bad) << "{ this is not json";
  RunResult r = run("decompose " + bad.string() + " " + (work_dir() / "x.json").string());
  CHECK(r.exit_code == 2);
  json payload = json::parse(r.stdout_text);
  CHECK(payload["status"] == "error");
}

TEST_CASE("zero tensor decomposes to zero terms") {
  fs::path t = work_dir() / "zero.json";
  fs::path d = work_dir() / "zero_d.json";
  write_file(t.string(), pencil_to_json(Pencil::zero(3, 4)));
  RunResult r = run("decompose " + t.string() + " " + d.string());
  CHECK(r.exit_code == 0);
  json payload = json::parse(r.stdout_text);
  CHECK(payload["payload"]["terms"] == 0);
  CHECK(payload["payload"]["residual"] == 0.0);
}

TEST_CASE("verify round trip, damaged, and padded decompositions") {
  fs::path t = work_dir() / "v.json";
  fs::path d = work_dir() / "v_d.json";
  REQUIRE(run("gen random --m 4 --n 5 --seed 9 " + t.string()).exit_code == 0);
  REQUIRE(run("decompose " + t.string() + " " + d.string()).exit_code == 0);
  CHECK(run("verify " + t.string() + " " + d.string()).exit_code == 0);

  // Delete one term: residual blows up, exit 1.
  Decomposition D = read_decomposition_file(d.string());
  REQUIRE(D.term_count() >= 2);
  Decomposition damaged = D;
  damaged.terms.pop_back();
  fs::path dd = work_dir() / "v_damaged.json";
  write_file(dd.string(), decomposition_to_json(damaged));
  RunResult r1 = run("verify " + t.string() + " " + dd.string());
  CHECK(r1.exit_code == 1);
  json p1 = json::parse(r1.stdout_text);
  CHECK(p1["payload"]["residual_ok"] == false);

  // Pad with zero terms beyond the bound: residual fine, count flagged.
  Decomposition padded = D;
  while (padded.term_count() <= max_rank_bound(4, 5).bound) {
    RankOneTerm z;
    z.alpha = Vector2d::Zero();
    z.u = Vector::Zero(4);
    z.v = Vector::Zero(5);
    padded.terms.push_back(z);
  }
  fs::path dp = work_dir() / "v_padded.json";
  write_file(dp.string(), decomposition_to_json(padded));
  RunResult r2 = run("verify " + t.string() + " " + dp.string());
  CHECK(r2.exit_code == 1);
  json p2 = json::parse(r2.stdout_text);
  CHECK(p2["payload"]["residual_ok"] == true);
  CHECK(p2["payload"]["flag"] == "count_exceeds_bound");

  // Shape mismatch exits 2.
  fs::path t2 = work_dir() / "v2.json";
  REQUIRE(run("gen random --m 3 --n 5 --seed 9 " + t2.string()).exit_code == 0);
  CHECK(run("verify " + t2.string() + " " + d.string()).exit_code == 2);
}

TEST_CASE("table cells match the closed form") {
  RunResult r = run("table --mmax 5 --nmax 5");
  CHECK(r.exit_code == 0);
  json payload = json::parse(r.stdout_text);
  auto cell = [&](int m, int n) {
    return payload["payload"]["table"][m - 1][n - 1].get<int>();
  };
  CHECK(cell(2, 2) == 3);
  CHECK(cell(3, 4) == 5);
  CHECK(cell(5, 5) == 7);
}

TEST_CASE("gen rotation with angles produces block-diagonal slice 2") {
  fs::path f = work_dir() / "rot.json";
  RunResult r = run("gen rotation --n 4 --angle 1.0471975511965976 "
                    "--angle 0.78539816339744828 " + f.string());
  CHECK(r.exit_code == 0);
  Pencil T = read_pencil_file(f.string());
  CHECK((T.A - Matrix::Identity(4, 4)).norm() <= 1e-15);
  CHECK(T.B.block(0, 2, 2, 2).norm() == 0.0);
  CHECK(T.B.block(2, 0, 2, 2).norm() == 0.0);
  CHECK(T.B(0, 0) == doctest::Approx(0.5));            // cos(pi/3)
  CHECK(T.B(2, 2) == doctest::Approx(std::sqrt(0.5)));  // cos(pi/4)
}

TEST_CASE("gen rank-deficient honors the rank argument") {
  fs::path f = work_dir() / "rd.json";
  CHECK(run("gen rank-deficient --n 5 --rank 4 --seed 2 " + f.string()).exit_code == 0);
  Pencil T = read_pencil_file(f.string());
  CHECK(numerical_rank(T.A) == 4);
  CHECK(numerical_rank(T.B) == 4);
}

TEST_CASE("gen rejects invalid arguments") {
  CHECK(run("gen bogus --n 3 " + (work_dir() / "x.json").string()).exit_code == 2);
  CHECK(run("gen random --m 0 --n 3 " + (work_dir() / "x.json").string()).exit_code == 2);
}

TEST_CASE("oracle reports (1,1) for a rank-one tensor") {
  fs::path t = work_dir() / "one.json";
  Decomposition D;
  D.m = 3;
  D.n = 3;
  RankOneTerm term;
  term.alpha = Vector2d(1, 2);
  term.u = Vector::LinSpaced(3, 1, 3);
  term.v = Vector::LinSpaced(3, -1, 1);
  D.terms.push_back(term);
  write_file(t.string(), pencil_to_json(reconstruct(D)));
  RunResult r = run("oracle " + t.string() + " --restarts 10");
  CHECK(r.exit_code == 0);
  json payload = json::parse(r.stdout_text);
  CHECK(payload["payload"]["lower"] == 1);
  CHECK(payload["payload"]["upper"] == 1);
}

TEST_CASE("PENCILRANK_SEED is honored as the default seed") {
  fs::path f1 = work_dir() / "env1.json";
  fs::path f2 = work_dir() / "env2.json";
  std::string pre = "PENCILRANK_SEED=42 " + kCli + " ";
  fs::path out = work_dir() / "env_stdout.txt";
  REQUIRE(std::system((pre + "gen random --m 2 --n 3 " + f1.string() + " > " +
                       out.string()).c_str()) == 0);
  REQUIRE(run("gen random --m 2 --n 3 --seed 42 " + f2.string()).exit_code == 0);
  CHECK(slurp(f1) == slurp(f2));
}
