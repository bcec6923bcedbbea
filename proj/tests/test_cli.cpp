#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nthlab/cli.hpp"

using namespace nthlab;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args, std::string* log_out = nullptr) {
  args.insert(args.begin(), "nthlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream log;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), log);
  if (log_out) *log_out = log.str();
  return code;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nthlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  std::ofstream(dir / "run.cfg") << text;
  return dir / "run.cfg";
}

nlohmann::json read_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  return nlohmann::json::parse(in);
}

const char* tiny = "n = 3\nd = 3\nm = 16\nt_end = 0.5\ndt = 0.05\nsnapshot_every = 0.1\np = 2, 3\n";

}  // namespace

TEST(Cli, UnknownCommandIsUsageError) {
  std::string log;
  EXPECT_EQ(run_cli({"frobnicate"}, &log), 2);
  EXPECT_NE(log.find("usage:"), std::string::npos);
}

TEST(Cli, MissingConfigIsUsageError) {
  EXPECT_EQ(run_cli({"flow"}), 2);
  EXPECT_EQ(run_cli({"flow", "--config", "/nonexistent.cfg"}), 2);
  EXPECT_EQ(run_cli({}), 2);
  EXPECT_EQ(run_cli({"flow", "--threads", "x"}), 2);
}

TEST(Cli, BadConfigIsUsageError) {
  const auto dir = scratch("bad");
  std::string log;
  EXPECT_EQ(run_cli({"flow", "--config", write_config(dir, "m = -3\n").string(), "--out", dir.string()}, &log), 2);
  EXPECT_NE(log.find("run.cfg:1:"), std::string::npos) << log;
}

TEST(Cli, FlowWritesManifestAndOutputs) {
  const auto dir = scratch("flow");
  const auto cfg = write_config(dir, tiny);
  ASSERT_EQ(run_cli({"flow", "--config", cfg.string(), "--out", (dir / "out").string()}), 0);
  const auto run_dir = run_directory(dir / "out", parse_config(cfg.string()), "flow");
  ASSERT_TRUE(fs::exists(run_dir / "manifest.json"));
  const auto m = read_manifest(run_dir);
  EXPECT_EQ(m["command"], "flow");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_FALSE(m["finished"].is_null());
  EXPECT_EQ(m["config"]["m"], "16");
  std::vector<std::string> outs = m["outputs"];
  EXPECT_NE(std::find(outs.begin(), outs.end(), "trajectory.csv"), outs.end());
  for (const auto& o : outs) EXPECT_TRUE(fs::exists(run_dir / o)) << o;
  std::ifstream traj(run_dir / "trajectory.csv");
  std::string header;
  std::getline(traj, header);
  EXPECT_EQ(header, "time,loss,lambda_min,r_1,r_2,r_3,wnorm_1,wnorm_2,anorm");
}

TEST(Cli, OutputRootFromEnvironment) {
  const auto dir = scratch("env");
  const auto cfg = write_config(dir, tiny);
  setenv("NTHLAB_OUT", (dir / "envroot").string().c_str(), 1);
  const int code = run_cli({"kernels", "--config", cfg.string()});
  unsetenv("NTHLAB_OUT");
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(run_directory(dir / "envroot", parse_config(cfg.string()), "kernels") / "kernel_order2.csv"));
}

TEST(Cli, SeedOverrideChangesRunDirectory) {
  const auto dir = scratch("seed");
  const auto cfg = write_config(dir, tiny);
  ASSERT_EQ(run_cli({"kernels", "--config", cfg.string(), "--out", dir.string()}), 0);
  ASSERT_EQ(run_cli({"kernels", "--config", cfg.string(), "--out", dir.string(), "--seed-override", "7"}), 0);
  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) ++runs;
  EXPECT_EQ(runs, 2u);
}

TEST(Cli, TruncatedAndCompareSucceed) {
  const auto dir = scratch("trunc");
  const auto cfg = write_config(dir, std::string(tiny) + "x_new = 0.6, 0.0, 0.8\n");
  EXPECT_EQ(run_cli({"truncated", "--config", cfg.string(), "--out", dir.string()}), 0);
  EXPECT_EQ(run_cli({"compare", "--config", cfg.string(), "--out", dir.string()}), 0);
  const auto run_dir = run_directory(dir, parse_config(cfg.string()), "compare");
  std::ifstream in(run_dir / "compare.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "time,p,output_error,kernel_error,prediction_error");
}

TEST(Cli, DegenerateSweepFails) {
  const auto dir = scratch("degenerate");
  const auto cfg = write_config(dir, "n = 3\nd = 3\nwidths = 8, 16, 32\nseeds = 0\nt_end = 0\n");
  EXPECT_EQ(run_cli({"scaling", "--config", cfg.string(), "--out", dir.string()}), 1);
}

TEST(Cli, SelftestPasses) {
  const auto dir = scratch("selftest");
  std::string log;
  EXPECT_EQ(run_cli({"selftest", "--out", dir.string()}, &log), 0) << log;
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("repro");
  const auto check = reproducibility("flow", parse_config_text(tiny), dir);
  EXPECT_TRUE(check.passed) << check.measured;
}
