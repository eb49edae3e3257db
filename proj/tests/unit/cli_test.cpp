// SPDX-License-Identifier: Apache-2.0
#include "generators.hpp"

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("emreselect_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Invocation run(const std::string& args) const {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(EMRESELECT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Invocation r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path write_series(const std::string& name, const std::vector<double>& y) const {
    const auto p = dir / name;
    std::ofstream out(p);
    out << "y\n";
    out.precision(17);
    for (double v : y) out << v << '\n';
    return p;
  }

  static std::string config(const std::string& name) { return std::string(EMRESELECT_CONFIG_DIR) + "/" + name; }

  fs::path dir;
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST_F(Cli, HelpVersionAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("emreselect"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("detect").code, 2);
  EXPECT_EQ(run("detect --input /nonexistent.csv").code, 2);
}

TEST_F(Cli, DetectFindsBothKinksOfANoisyTent) {
  const auto p = write_series("tent.csv", emr::gen::piecewise_linear(300, {100, 200}, {0.05, -0.05, 0.05}, 0.0, 0.01, 3));
  const auto r = run("detect --input " + p.string() + " --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 3U) << r.out;
  EXPECT_EQ(rows[0], "index,interval_start,interval_end,glr");
  const int first = std::stoi(rows[1]);
  const int second = std::stoi(rows[2]);
  EXPECT_NEAR(first, 100, 2);
  EXPECT_NEAR(second, 200, 2);
}

TEST_F(Cli, DetectOnALineReportsHeaderOnly) {
  const auto p = write_series("line.csv", emr::gen::piecewise_linear(300, {}, {0.02}, 1.0, 0.01, 4));
  const auto r = run("detect --input " + p.string() + " --column y");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "index,interval_start,interval_end,glr\n");
}

TEST_F(Cli, MalformedCsvIsAValidationErrorNamingTheFile) {
  const auto p = dir / "bad.csv";
  std::ofstream(p) << "y\n1\n2\nabc\n";
  const auto r = run("detect --input " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("bad.csv"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("abc"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownColumnIsAValidationError) {
  const auto p = write_series("s.csv", {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(run("detect --input " + p.string() + " --column zz").code, 2);
}

TEST_F(Cli, SynthIsDeterministicAndFeedsSelect) {
  const auto a = run("synth --config " + config("synth_piecewise.json") + " --output-dir " + dir.string());
  ASSERT_EQ(a.code, 0) << a.err;
  const auto j = json::parse(a.out);
  ASSERT_EQ(j.at("files").size(), 1U);
  const fs::path file = j.at("files")[0].get<std::string>();
  const auto first = slurp(file);
  const auto b = run("synth --config " + config("synth_piecewise.json") + " --output-dir " + dir.string());
  EXPECT_EQ(b.out, a.out);
  EXPECT_EQ(slurp(file), first);

  const auto s = run("select --input " + file.string() + " --outputs y0,y1 --inputs x0,x1 --window 4");
  ASSERT_EQ(s.code, 0) << s.err;
  const auto rows = lines(s.out);
  ASSERT_GE(rows.size(), 4U) << s.out;
  EXPECT_EQ(rows[0], "index,source_dim,glr_own,status,e_value,partner");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_TRUE(rows[i].find(",kept,") != std::string::npos || rows[i].find(",removed,") != std::string::npos ||
                rows[i].find(",short_history,") != std::string::npos)
        << rows[i];
  }
}

TEST_F(Cli, SynthStreamWritesOneFilePerDomain) {
  const auto r = run("synth --config " + config("synth_stream.json") + " --output-dir " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.at("files").size(), 2U);
  for (const auto& f : j.at("files")) EXPECT_TRUE(fs::exists(f.get<std::string>()));
}

TEST_F(Cli, ScenarioRerunIsByteIdentical) {
  const std::string args = "scenario --config " + config("quick.json") + " --output-dir " + dir.string();
  const auto a = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto j = json::parse(a.out);
  const fs::path run_dir = j.at("run_dir").get<std::string>();
  EXPECT_EQ(run_dir.filename().string(), j.at("config_hash").get<std::string>());
  const auto metrics = slurp(run_dir / "metrics.json");
  const auto mae = slurp(run_dir / "mae.csv");
  ASSERT_FALSE(metrics.empty());
  const auto b = run(args);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(b.out, a.out);
  EXPECT_EQ(slurp(run_dir / "metrics.json"), metrics);
  EXPECT_EQ(slurp(run_dir / "mae.csv"), mae);
}

TEST_F(Cli, FlagsOverrideConfigAndChangeTheHash) {
  const std::string base = "scenario -q --config " + config("quick.json") + " --output-dir " + dir.string() +
                           " --strategies None --continual-epochs 2";
  const auto a = run(base);
  const auto b = run(base + " --seed 3");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_TRUE(a.err.empty());
  EXPECT_NE(json::parse(a.out).at("config_hash"), json::parse(b.out).at("config_hash"));
  const auto metrics = json::parse(slurp(fs::path(json::parse(a.out).at("run_dir").get<std::string>()) / "metrics.json"));
  ASSERT_EQ(metrics.at("strategies").size(), 1U);
  EXPECT_EQ(metrics.at("strategies")[0].at("training")[0].at("epochs").size(), 2U);
  EXPECT_EQ(run(base + " --strategies SI").code, 2);
}

TEST_F(Cli, TrainInitialThenContinualFromTheCheckpoint) {
  const std::string common = " --config " + config("quick.json") + " --output-dir " + dir.string();
  const auto a = run("train-initial" + common);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto ja = json::parse(a.out);
  const std::string ck = ja.at("checkpoint");
  ASSERT_TRUE(fs::exists(ck));
  EXPECT_EQ(ja.at("mae").size(), 3U);
  const auto b = run("train-continual --strategy AGem --checkpoint " + ck + common);
  ASSERT_EQ(b.code, 0) << b.err;
  const auto jb = json::parse(b.out);
  EXPECT_EQ(jb.at("strategy"), "AGem");
  EXPECT_GT(jb.at("memory_size").get<int>(), 0);
  EXPECT_EQ(run("train-continual --strategy Nope" + common).code, 2);
  const auto bad = dir / "corrupt.json";
  std::ofstream(bad) << "{ not json";
  EXPECT_EQ(run("train-continual --checkpoint " + bad.string() + common).code, 2);
}

TEST_F(Cli, ConformalSweepEchoesItsCsv) {
  const std::string common = " --config " + config("quick.json") + " --output-dir " + dir.string();
  const auto r = run("conformal-sweep --sizes 10,0,10" + common);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 1 + 2 * 2 * 2U) << r.out;
  EXPECT_EQ(rows[0], "memory_size,output_dim,coverage,width,domain");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_EQ(run("conformal-sweep --sizes ''" + common).code, 2);
  EXPECT_EQ(run("conformal-sweep --sizes 3,x" + common).code, 2);
  EXPECT_EQ(run("conformal-sweep --sizes 5 --alpha 1.5" + common).code, 2);
}

TEST_F(Cli, DivergentTrainingIsANumericError) {
  auto j = json::parse(std::ifstream(config("quick.json")));
  j["initial"]["learning_rate"] = 1e300;
  j["initial"]["stop_mse"] = 0.0;
  const auto p = dir / "diverge.json";
  std::ofstream(p) << j.dump();
  const auto r = run("train-initial --config " + p.string() + " --output-dir " + dir.string());
  EXPECT_EQ(r.code, 3) << r.err;
}

}  // namespace
