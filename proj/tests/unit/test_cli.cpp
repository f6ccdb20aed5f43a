#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sandpile");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = sandpile::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sandpile_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& s) const { return (dir_ / s).string(); }
  fs::path dir_;
};

const std::string kStar = R"({"kind":"tree","d":2,"generations":1})";

}  // namespace

TEST_F(Cli, VerifyStar) {
  const Result r = invoke({"verify", "--seed", "1", "--volume", kStar, "--out", path("v")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string report = slurp(dir_ / "v" / "report.json");
  EXPECT_NE(report.find("\"determinant\": \"54\""), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "v" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "v" / "recurrent.csv"));
}

TEST_F(Cli, MissingSeedIsUsageError) {
  EXPECT_EQ(invoke({"verify", "--volume", kStar, "--out", path("a")}).code, sandpile::cli::kUsage);
}

TEST_F(Cli, VerifyBeyondCapIsUsageError) {
  const Result r =
      invoke({"verify", "--seed", "1", "--volume", R"({"kind":"tree","d":2,"generations":3})", "--out", path("a")});
  EXPECT_EQ(r.code, sandpile::cli::kUsage);
  EXPECT_NE(r.err.find("enumeration cap"), std::string::npos);
}

TEST_F(Cli, ZeroSamplesIsUsageError) {
  EXPECT_EQ(invoke({"sample", "--seed", "1", "--samples", "0", "--volume", kStar, "--out", path("a")}).code,
            sandpile::cli::kUsage);
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(invoke({"verify", "--seed", "1", "--bogus"}).code, sandpile::cli::kUsage);
}

TEST_F(Cli, NonSummableRefused) {
  const Result r = invoke({"dynamics", "--seed", "1", "--phi", R"({"kind":"constant","c":1})", "--schedule", "1,2",
                           "--runs", "2", "--out", path("d")});
  EXPECT_EQ(r.code, sandpile::cli::kRefused);
  EXPECT_NE(r.err.find("summab"), std::string::npos);
  const Result ok = invoke({"dynamics", "--seed", "1", "--phi", R"({"kind":"constant","c":1})", "--schedule", "1,2",
                            "--runs", "2", "--allow-nonsummable", "--out", path("d")});
  EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST_F(Cli, ConfigFileWithOverride) {
  {
    std::ofstream f(path("cfg.json"));
    f << R"({"seed": 5, "samples": 3, "volume": {"kind":"tree","d":2,"sites":3}, "sampler": "enumeration"})";
  }
  ASSERT_EQ(invoke({"sample", "--config", path("cfg.json"), "--samples", "4", "--out", path("s")}).code, 0);
  const std::string csv = slurp(dir_ / "s" / "samples.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 3);
  EXPECT_NE(slurp(dir_ / "s" / "manifest.json").find("\"samples\": 4"), std::string::npos);
}

TEST_F(Cli, RerunIsByteIdentical) {
  const std::vector<std::string> cmd{"stats", "--seed", "3", "--samples", "3000", "--volume",
                                     R"({"kind":"tree","d":2,"generations":2})", "--sampler", "mcmc", "--threads", "2"};
  auto a = cmd, b = cmd;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  for (const char* f : {"summary.json", "greens.csv", "clusters.csv", "manifest.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}
