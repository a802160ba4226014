#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  nlohmann::json last;  // final stdout line parsed as JSON, when it is JSON
};

Run run(const std::string& args) {
  const std::string cmd = std::string(EGOCORR_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::string line, last;
  std::istringstream in(r.out);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  r.last = nlohmann::json::parse(last, nullptr, false);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> contents of every regular file below dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("usage errors and version") {
  CHECK(run("--version").out.find("egocorr") != std::string::npos);
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("synth --out /tmp/x --no-such-flag").code == 1);
  CHECK(run("--set bogus_key=3 synth --out /tmp/x").code == 1);
  CHECK(run("--help").code == 0);
  testing::TempDir dir("cli-err");
  const auto missing = run("extract --video " + q(dir / "none") + " --out " + q(dir / "a"));
  CHECK(missing.code == 2);
}

TEST_CASE("synth is deterministic") {
  testing::TempDir dir("cli-synth");
  const std::string args = " --seed 7 --people 2 --frames 80 --distractors 1";
  const auto a = run("synth --out " + q(dir / "a") + args);
  REQUIRE(a.code == 0);
  CHECK(a.last["command"] == "synth");
  REQUIRE(run("synth --out " + q(dir / "b") + args).code == 0);
  const auto ta = tree(dir / "a"), tb = tree(dir / "b");
  CHECK(ta.size() > 80);
  CHECK(ta == tb);
}

TEST_CASE("search workflow end to end") {
  testing::TempDir dir("cli-flow");
  const fs::path s = dir / "session";
  REQUIRE(run("synth --out " + q(s) + " --seed 3 --people 2 --frames 110").code == 0);

  for (const char* id : {"p0", "p1"}) {
    const auto e = run("extract --video " + q(s / "videos" / id) + " --out " + q(dir / id));
    REQUIRE(e.code == 0);
    CHECK(e.last["candidates"].get<int>() > 0);
  }

  const auto sc = run("--jobs 2 score --query " + q(dir / "p1") + " --observer " + q(dir / "p0") +
                      " --two-step --out " + q(dir / "scores.csv"));
  REQUIRE(sc.code == 0);
  CHECK(sc.last["exact_evaluations"].get<int>() < sc.last["candidates"].get<int>());
  std::ifstream csv(dir / "scores.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "index,b,l,UB,C,likelihood,prior,posterior");

  REQUIRE(run("map --scores " + q(dir / "scores.csv") + " --observer " + q(dir / "p0") + " --out " +
              q(dir / "maps")).code == 0);
  const auto auc = run("auc --maps " + q(dir / "maps") + " --truth " + q(s / "truth" / "p0" / "p1"));
  REQUIRE(auc.code == 0);
  CHECK(auc.last["auc"].get<double>() > 0.9);
  const auto mask = run("mask --maps " + q(dir / "maps") + " --out " + q(dir / "masks") + " --threshold 0.5");
  REQUIRE(mask.code == 0);
  CHECK(fs::exists(dir / "masks" / "mask_000010.pgm"));

  // a prior trained on the observer's own truth
  const auto tp = run("train-prior --analysis " + q(dir / "p0") + " --truth " + q(s / "truth" / "p0") + " --out " +
                      q(dir / "prior.json"));
  REQUIRE(tp.code == 0);
  CHECK(run("score --query " + q(dir / "p1") + " --observer " + q(dir / "p0") + " --prior " + q(dir / "prior.json") +
            " --out " + q(dir / "scores_cg.csv")).code == 0);

  const auto aff = run("affinity --analysis " + q(dir / "p0") + " " + q(dir / "p1") + " --out " + q(dir / "aff.csv"));
  REQUIRE(aff.code == 0);
  const auto ret = run("retrieve --affinity " + q(dir / "aff.csv") + " --query p0 --relevant p1");
  REQUIRE(ret.code == 0);
  CHECK(ret.last["r_precision"] == 1.0);
  const auto clu = run("cluster --affinity " + q(dir / "aff.csv") + " --out " + q(dir / "clusters.json"));
  REQUIRE(clu.code == 0);
  CHECK(clu.last["group_count"].get<int>() >= 1);

  // scoring against a query that is not an analysis: its frames are analysed on the fly
  const auto frames_query = run("score --query " + q(s / "videos" / "p1") + " --observer " + q(dir / "p0") +
                                " --two-step --out " + q(dir / "scores_frames.csv"));
  REQUIRE(frames_query.code == 0);
  CHECK(slurp(dir / "scores_frames.csv") == slurp(dir / "scores.csv"));

  const auto mismatch = run("map --scores " + q(dir / "aff.csv") + " --observer " + q(dir / "p0") + " --out " +
                            q(dir / "m2"));
  CHECK(mismatch.code == 2);
}

TEST_CASE("bench writes a report") {
  testing::TempDir dir("cli-bench");
  REQUIRE(run("synth --out " + q(dir / "s") + " --seed 4 --people 2 --frames 100").code == 0);
  const auto b = run("bench --dir " + q(dir / "s") + " --variant 'two-step(25,32)' --out " + q(dir / "r"));
  REQUIRE(b.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "r" / "report.json"));
  for (const char* key : {"variant", "session_auc", "pairs", "mean_r_precision", "clustering", "exact_evaluations",
                          "total_candidates", "stage_seconds"})
    CHECK_MESSAGE(j.contains(key), key);
  CHECK(j["variant"] == "two-step(25,32)");
  CHECK(fs::exists(dir / "r" / "table1_auc.csv"));
  CHECK(run("bench --dir " + q(dir / "s") + " --variant nonsense").code == 1);
}
