#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fdaw/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result fdaw_run(std::vector<std::string> args) {
  args.insert(args.begin(), "fdaw");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = fdaw::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fdaw_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // simulate + fit for one kind; returns the fit path
  std::string prepare(const std::string& kind, const std::string& tag, std::vector<std::string> fit_extra = {}) {
    const std::string csv = path(tag + ".csv"), fit = path(tag + ".json");
    auto s = fdaw_run({"simulate", "--scenario", kind, "--seed", "5", "--out", csv, "--truth", path(tag + "_truth.json"),
                       "--n", kind == "tvfpca" ? "20" : "40", "--grid-size", "24"});
    EXPECT_EQ(s.code, 0) << s.err;
    std::vector<std::string> args{"fit", "--model", kind, "--input", csv, "--layout", "wide", "--out", fit};
    args.insert(args.end(), fit_extra.begin(), fit_extra.end());
    auto f = fdaw_run(args);
    EXPECT_EQ(f.code, 0) << f.err;
    last_summary_ = f.out;
    return fit;
  }

  fs::path dir_;
  std::string last_summary_;
};

}  // namespace

TEST_F(Cli, FitPrintsSummary) {
  prepare("fpca", "a", {"--pve", "0.99"});
  EXPECT_NE(last_summary_.find("K="), std::string::npos) << last_summary_;
  EXPECT_NE(last_summary_.find("kind=fpca"), std::string::npos);
  prepare("mfpca", "b");
  EXPECT_NE(last_summary_.find("K="), std::string::npos) << last_summary_;
  prepare("fosr", "c", {"--terms", "group"});
  EXPECT_NE(last_summary_.find("p=1"), std::string::npos) << last_summary_;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(fdaw_run({}).code, 2);
  EXPECT_EQ(fdaw_run({"fit", "--bogus"}).code, 2);
  EXPECT_EQ(fdaw_run({"fit", "--model", "pca", "--input", "x", "--out", "y"}).code, 2);
  EXPECT_EQ(fdaw_run({"simulate", "--scenario", "fpca", "--out", path("x.csv")}).code, 2);  // missing --seed
  const auto r = fdaw_run({"fit", "--model", "fpca", "--input", "x.csv", "--out", "y.json", "--twoway"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--twoway"), std::string::npos) << r.err;
  EXPECT_EQ(fdaw_run({"--help"}).code, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  const auto missing = fdaw_run({"fit", "--model", "fpca", "--input", path("none.csv"), "--out", path("f.json")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_FALSE(missing.err.empty());

  const std::string fit = prepare("fpca", "a");
  const auto coef = fdaw_run({"extract", "--fit", fit, "--what", "coef", "--out", path("coef.csv")});
  EXPECT_EQ(coef.code, 1);
  EXPECT_NE(coef.err.find("coef requires kind fosr"), std::string::npos) << coef.err;
  EXPECT_FALSE(fs::exists(path("coef.csv")));

  const auto far = fdaw_run({"extract", "--fit", fit, "--what", "component", "--k", "40", "--out", path("c.csv")});
  EXPECT_EQ(far.code, 1);
}

TEST_F(Cli, ExtractFormats) {
  const std::string fp = prepare("fpca", "a");
  ASSERT_EQ(fdaw_run({"extract", "--fit", fp, "--what", "scores", "--out", path("s.csv")}).code, 0);
  EXPECT_EQ(first_line(path("s.csv")), "subject,score_x,score_y");
  ASSERT_EQ(fdaw_run({"extract", "--fit", fp, "--what", "scree", "--out", path("scree.csv")}).code, 0);
  EXPECT_EQ(first_line(path("scree.csv")), "k,lambda,cumulative_pve");
  ASSERT_EQ(fdaw_run({"extract", "--fit", fp, "--what", "component", "--k", "1", "--out", path("c.csv")}).code, 0);
  EXPECT_EQ(first_line(path("c.csv")), "t,mean,psi,lower,upper");

  const std::string fr = prepare("fosr", "r", {"--terms", "group"});
  ASSERT_EQ(fdaw_run({"extract", "--fit", fr, "--what", "coef", "--term", "group:b", "--out", path("coef.csv")}).code, 0);
  EXPECT_EQ(first_line(path("coef.csv")), "t,estimate,lower,upper");
  ASSERT_EQ(fdaw_run({"extract", "--fit", fr, "--what", "residuals", "--out", path("res.csv")}).code, 0);
  EXPECT_EQ(first_line(path("res.csv")).rfind("rank,subject,visit,depth,outlier,t=", 0), 0u);

  const std::string tv = prepare("tvfpca", "t");
  ASSERT_EQ(fdaw_run({"extract", "--fit", tv, "--what", "trajectory", "--subject", "s1", "--out", path("tr.csv")}).code, 0);
  std::ifstream in(path("tr.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frame,T,s,value");
  int last_frame = 0;
  while (std::getline(in, line)) last_frame = std::stoi(line.substr(0, line.find(',')));
  EXPECT_EQ(last_frame, 21);
  EXPECT_EQ(fdaw_run({"extract", "--fit", tv, "--what", "trajectory", "--out", path("x.csv")}).code, 2);
}

TEST_F(Cli, Deterministic) {
  for (const std::string kind : {"fpca", "mfpca", "tvfpca", "fosr"}) {
    const std::vector<std::string> extra = kind == "fosr" ? std::vector<std::string>{"--terms", "group"} : std::vector<std::string>{};
    const std::string a = prepare(kind, kind + "1", extra), b = prepare(kind, kind + "2", extra);
    EXPECT_EQ(slurp(path(kind + "1.csv")), slurp(path(kind + "2.csv"))) << kind;
    EXPECT_EQ(slurp(a), slurp(b)) << kind;
    const std::string what = kind == "fosr" ? "coef" : "scores";
    ASSERT_EQ(fdaw_run({"extract", "--fit", a, "--what", what, "--out", path(kind + "1_x.csv")}).code, 0);
    ASSERT_EQ(fdaw_run({"extract", "--fit", b, "--what", what, "--out", path(kind + "2_x.csv")}).code, 0);
    EXPECT_EQ(slurp(path(kind + "1_x.csv")), slurp(path(kind + "2_x.csv"))) << kind;
  }
}

TEST_F(Cli, DefaultLayoutsAgree) {
  ASSERT_EQ(fdaw_run({"simulate", "--scenario", "fpca", "--seed", "2", "--n", "30", "--out", path("y.csv")}).code, 0);
  EXPECT_EQ(fdaw_run({"fit", "--model", "fpca", "--input", path("y.csv"), "--out", path("f.json")}).code, 0);
  ASSERT_EQ(fdaw_run({"simulate", "--scenario", "fpca", "--seed", "2", "--n", "30", "--layout", "long", "--out", path("l.csv")}).code, 0);
  EXPECT_EQ(fdaw_run({"fit", "--model", "fpca", "--input", path("l.csv"), "--layout", "long", "--out", path("g.json")}).code, 0);
  EXPECT_EQ(slurp(path("f.json")), slurp(path("g.json")));
}
