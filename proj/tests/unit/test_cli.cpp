#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "slr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = slr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("slr_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    data_ = (dir_ / "case.svm").string();
    const Result r = run_cli({"gen", "--m", "60", "--n", "300", "--seed", "5", "--out", data_});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
  static std::string data_;
};

fs::path Cli::dir_;
std::string Cli::data_;

TEST_F(Cli, GenIsDeterministicAndWritesSidecar) {
  const std::string a = (dir_ / "a.svm").string();
  const std::string b = (dir_ / "b.svm").string();
  ASSERT_EQ(run_cli({"gen", "--m", "200", "--n", "500", "--seed", "1", "--out", a}).code, 0);
  ASSERT_EQ(run_cli({"gen", "--m", "200", "--n", "500", "--seed", "1", "--out", b}).code, 0);
  const std::string text = slurp(a);
  EXPECT_EQ(text, slurp(b));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 200);
  const auto meta = nlohmann::json::parse(slurp(a + ".meta.json"));
  EXPECT_EQ(meta["m"], 200);
  EXPECT_EQ(meta["n"], 500);
  EXPECT_NEAR(meta["density"].get<double>(), 0.30, 0.02);
}

TEST_F(Cli, SolveAboveLambdaMaxIsEmpty) {
  const Result r = run_cli({"solve", "--data", data_, "--lambda-frac", "1.5", "--format", "jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = json_lines(r.out).at(0);
  EXPECT_EQ(rec["nnz"], 0);
  EXPECT_EQ(rec["converged"], true);
}

TEST_F(Cli, SolversAgree) {
  const Result a = run_cli({"solve", "--data", data_, "--lambda-frac", "0.1", "--format", "jsonl", "--tol", "1e-9"});
  const Result b = run_cli(
      {"solve", "--data", data_, "--lambda-frac", "0.1", "--format", "jsonl", "--tol", "1e-9", "--solver", "proxgrad"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const double fa = json_lines(a.out).at(0)["objective"];
  const double fb = json_lines(b.out).at(0)["objective"];
  EXPECT_LE(std::abs(fa - fb) / std::max(1.0, std::abs(fa)), 1e-6);
  EXPECT_LE(json_lines(a.out).at(0)["kkt"].get<double>(), 1e-9);
}

TEST_F(Cli, SolveWritesRecordFile) {
  const std::string out = (dir_ / "solve.jsonl").string();
  const Result r = run_cli({"solve", "--data", data_, "--lambda", "0.05", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = json_lines(slurp(out)).at(0);
  EXPECT_EQ(rec["command"], "solve");
  EXPECT_DOUBLE_EQ(rec["lambda"].get<double>(), 0.05);
  for (const char* key : {"outer", "inner", "iter", "kkt", "time", "nnz", "v", "objective", "lambda_max"}) {
    EXPECT_TRUE(rec.contains(key)) << key;
  }
}

TEST_F(Cli, PathDefaultGrid) {
  const Result r = run_cli({"path", "--data", data_, "--format", "jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = json_lines(r.out);
  ASSERT_EQ(recs.size(), 3u);
  const double fracs[] = {0.5, 0.1, 0.05};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(recs[k]["lambda_frac"].get<double>(), fracs[k]);
    EXPECT_LE(recs[k]["res"].get<double>(), recs[k]["eps"].get<double>());
    for (const char* key : {"nnz", "ias", "outer", "inner", "time"}) EXPECT_TRUE(recs[k].contains(key)) << key;
  }
}

TEST_F(Cli, SinglePointPathMatchesSolveSupport) {
  const Result p = run_cli({"path", "--data", data_, "--lambda-fracs", "0.2", "--format", "jsonl"});
  const Result s = run_cli({"solve", "--data", data_, "--lambda-frac", "0.2", "--format", "jsonl", "--tol", "1e-9"});
  ASSERT_EQ(p.code, 0) << p.err;
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(json_lines(p.out).at(0)["nnz"], json_lines(s.out).at(0)["nnz"]);
}

TEST_F(Cli, OutputIsStableAcrossRuns) {
  auto strip_time = [](std::string text) {
    auto recs = json_lines(text);
    for (auto& r : recs) r.erase("time");
    return nlohmann::json(recs).dump();
  };
  const Result a = run_cli({"path", "--data", data_, "--format", "jsonl"});
  const Result b = run_cli({"path", "--data", data_, "--format", "jsonl"});
  EXPECT_EQ(strip_time(a.out), strip_time(b.out));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"nonsense"}).code, 1);
  EXPECT_EQ(run_cli({"solve", "--data", data_}).code, 1);
  EXPECT_EQ(run_cli({"solve", "--data", data_, "--lambda", "0.1", "--lambda-frac", "0.1"}).code, 1);
  EXPECT_EQ(run_cli({"solve", "--data", data_, "--lambda-frac", "0.1", "--bogus"}).code, 1);
  EXPECT_EQ(run_cli({"solve", "--data", data_, "--lambda-frac", "0.1", "--solver", "sgd"}).code, 1);
  EXPECT_EQ(run_cli({"solve", "--data", (dir_ / "missing.svm").string(), "--lambda", "0.1"}).code, 1);
  EXPECT_EQ(run_cli({"path", "--data", data_, "--lambda-fracs", "0.1,0.5"}).code, 1);
  EXPECT_EQ(run_cli({"path", "--data", data_, "--lambda-fracs", "0.1,0.1"}).code, 1);
  EXPECT_EQ(run_cli({"path", "--data", data_, "--lambda-fracs", ""}).code, 1);
  EXPECT_EQ(run_cli({"gen", "--m", "1", "--n", "5", "--out", (dir_ / "x.svm").string()}).code, 1);

  const std::string bad = (dir_ / "bad.svm").string();
  std::ofstream(bad) << "1 1:1\n-1 2:x\n";
  const Result r = run_cli({"solve", "--data", bad, "--lambda", "0.1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, NonConvergenceExitCode) {
  const Result r = run_cli({"solve", "--data", data_, "--lambda-frac", "0.05", "--tol", "1e-300"});
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, VerifyQuickPasses) {
  const std::string out = (dir_ / "verify.jsonl").string();
  const Result r = run_cli({"verify", "--quick", "--out", out});
  EXPECT_EQ(r.code, 0) << r.out;
  const auto recs = json_lines(slurp(out));
  ASSERT_EQ(recs.size(), 9u);
  for (const auto& rec : recs) EXPECT_NE(rec["status"], "FAIL") << rec.dump();
}

TEST_F(Cli, HelpExitsCleanly) {
  const Result r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("solve"), std::string::npos);
}

}  // namespace
