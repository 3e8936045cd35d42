#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dkm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  Result run(const std::string& args) const {
    const auto out = dir_ / "stdout", err = dir_ / "stderr";
    const std::string cmd = std::string(DKM_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Small synthetic model shared by several tests.
  fs::path trained(const std::string& name = "base.dkmm") const {
    const auto p = path(name);
    const auto r = run("train --synthetic --epochs 3 --seed 5 -o " + p.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

double parse_top1(const std::string& out) {
  const auto pos = out.find("top1=");
  if (pos == std::string::npos) return -1.0;
  return std::stod(out.substr(pos + 5));
}

}  // namespace

TEST_F(Cli, NoSubcommandIsUsageError) {
  const auto r = run("");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Subcommands:"), std::string::npos);
}

TEST_F(Cli, UnknownFlagIsUsageErrorWithHelp) {
  const auto r = run("train -o " + path("m.dkmm").string() + " --no-such-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.err.find("Usage:"), std::string::npos);
}

TEST_F(Cli, BadOptionValueIsUsageError) {
  EXPECT_EQ(run("train --synthetic --epochs many").code, 2);
}

TEST_F(Cli, HelpExitsZero) {
  const auto r = run("compress --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--cluster-rate"), std::string::npos);
}

TEST_F(Cli, EnergyDefaultMatchesGolden) {
  const auto r = run("energy");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(fs::path(DKM_GOLDEN_DIR) / "lenet_energy.txt"));
}

TEST_F(Cli, EnergyFromNetspecMatchesGolden) {
  const auto r = run(std::string("energy --netspec ") + DKM_GOLDEN_DIR + "/lenet.netspec");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(fs::path(DKM_GOLDEN_DIR) / "lenet_energy.txt"));
}

TEST_F(Cli, MalformedNetspecIsFormatError) {
  std::ofstream(path("bad.netspec")) << "conv name=x s=5 c=banana\n";
  const auto r = run("energy --netspec " + path("bad.netspec").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, MissingModelFileIsError) {
  EXPECT_EQ(run("eval --synthetic --model " + path("absent.dkmm").string()).code, 1);
}

TEST_F(Cli, ContractViolationIsError) {
  const auto model = trained();
  const auto r = run("compress --model " + model.string() + " --cluster-rate 1.5 -o " +
                     path("c.dkmc").string());
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, CorruptModelIsError) {
  const auto model = trained();
  auto bytes = slurp(model);
  bytes[bytes.size() / 2] ^= 0x10;
  std::ofstream(path("corrupt.dkmm"), std::ios::binary) << bytes;
  const auto r = run("eval --synthetic --model " + path("corrupt.dkmm").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("CRC"), std::string::npos) << r.err;
}

TEST_F(Cli, CorruptCompressedIsError) {
  const auto model = trained();
  ASSERT_EQ(run("compress --model " + model.string() + " -o " + path("c.dkmc").string()).code, 0);
  auto bytes = slurp(path("c.dkmc"));
  bytes[0] = 'X';
  std::ofstream(path("bad.dkmc"), std::ios::binary) << bytes;
  EXPECT_EQ(run("eval --synthetic --model " + path("bad.dkmc").string()).code, 1);
}

TEST_F(Cli, RateOneCompressionKeepsAccuracy) {
  const auto model = trained();
  const auto c = path("full.dkmc");
  const auto rc = run("compress --model " + model.string() + " --cluster-rate 1 -o " + c.string());
  ASSERT_EQ(rc.code, 0) << rc.err;
  const auto a = run("eval --synthetic --model " + model.string());
  const auto b = run("eval --synthetic --model " + c.string());
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_GE(parse_top1(a.out), 0.0);
  EXPECT_EQ(parse_top1(a.out), parse_top1(b.out));
}

TEST_F(Cli, ArtifactsAreByteIdenticalAcrossRuns) {
  const auto m1 = trained("a.dkmm"), m2 = trained("b.dkmm");
  EXPECT_EQ(slurp(m1), slurp(m2));

  const std::string retrain = "retrain --synthetic --epochs 2 --lambda 1e-3 --model " + m1.string() + " -o ";
  ASSERT_EQ(run(retrain + path("r1.dkmm").string()).code, 0);
  ASSERT_EQ(run(retrain + path("r2.dkmm").string()).code, 0);
  EXPECT_EQ(slurp(path("r1.dkmm")), slurp(path("r2.dkmm")));

  const std::string compress = "compress --cluster-rate 0.2 --model " + path("r1.dkmm").string() + " -o ";
  ASSERT_EQ(run(compress + path("c1.dkmc").string()).code, 0);
  ASSERT_EQ(run("--threads 1 " + compress + path("c2.dkmc").string()).code, 0);
  EXPECT_EQ(slurp(path("c1.dkmc")), slurp(path("c2.dkmc")));
}

TEST_F(Cli, ReportAtRateOneHasZeroDelta) {
  const auto r = run("report --synthetic --epochs 3 --retrain-epochs 2 --cluster-rate 1.0 -o " +
                     path("report.txt").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(path("report.txt"));
  // Sharing with K = N reproduces the retrained weights exactly, so the Deep
  // k-Means column differs from the retrained accuracy by nothing.
  std::istringstream lines(text);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("point", 0) == 0) continue;
    std::istringstream fields(line);
    std::string label, k, cr, retrained, dkm, wr, dkm_delta;
    fields >> label >> k >> cr >> retrained >> dkm >> wr >> dkm_delta;
    if (dkm_delta.empty()) continue;
    found = true;
    EXPECT_EQ(retrained, dkm) << line;
    EXPECT_DOUBLE_EQ(std::stod(dkm_delta), 0.0) << line;
  }
  EXPECT_TRUE(found) << text;
}
