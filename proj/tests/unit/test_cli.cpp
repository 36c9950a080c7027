#include "cbp/cli.hpp"
#include "cbp/io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

using namespace cbp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cbpabc");
  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const fs::path dir = fs::temp_directory_path() / "cbp_cli_tests";
  fs::create_directories(dir);
  return dir;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = workdir() / name;
  write_file_atomic(p, text);
  return p;
}

const std::string kToyConfig = "offspring = binomial(3,0.7)\n"
                               "gamma = 0.9\n"
                               "generations = 6\n"
                               "observations = toy.csv\n"
                               "kappa_max = 4\n"
                               "particles = 40\n"
                               "pool_sizes = 400,800\n"
                               "keep_fraction = 0.5\n"
                               "min_kappa_particles = 5\n"
                               "kde_grid = 64\n"
                               "kde2d_grid = 16\n";

const std::string kToyData = "index,value\n0,1\n1,2\n2,4\n3,6\n4,11\n5,19\n6,30\nphi,17\n";

} // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"simulate"}).code, 1);
  const auto bad = write("bad.cfg", "nonsense = 1\n");
  const auto r = cli({"simulate", "-c", bad.string()});
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err.substr(r.err.rfind('{')));
  EXPECT_EQ(j["exit_code"], 1);
  EXPECT_EQ(j["error"], "config");
}

TEST(Cli, MissingDataExitsTwo) {
  const auto cfg = write("nodata.cfg", kToyConfig);
  fs::remove(workdir() / "toy.csv");
  EXPECT_EQ(cli({"smc", "-c", cfg.string(), "--out", (workdir() / "o1").string()}).code, 2);
  const auto garbage = write("garbage.csv", "index,value\n0,x\n");
  EXPECT_EQ(cli({"smc", "-c", cfg.string(), "--data", garbage.string(), "--out", (workdir() / "o1").string()}).code, 2);
}

TEST(Cli, BudgetExitsThree) {
  write("toy.csv", kToyData);
  const auto cfg = write("budget.cfg", kToyConfig + "max_discard_factor = 1\n");
  EXPECT_EQ(cli({"smc", "-c", cfg.string(), "--out", (workdir() / "o2").string()}).code, 3);
}

TEST(Cli, SimulateSmcRefineSummarize) {
  write("toy.csv", kToyData);
  const auto cfg = write("toy.cfg", kToyConfig);
  const fs::path out = workdir() / "o3";
  const auto sim = cli({"simulate", "-c", cfg.string(), "--out", out.string(), "--as-observations"});
  ASSERT_EQ(sim.code, 0) << sim.err;
  EXPECT_TRUE(fs::exists(out / "trajectory.csv"));
  EXPECT_NO_THROW(load_observations(out / "observations.csv"));

  const auto smc = cli({"smc", "-c", cfg.string(), "--out", out.string()});
  ASSERT_EQ(smc.code, 0) << smc.err;
  EXPECT_NE(smc.out.find("kappa_hat = "), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "archive_t1.csv"));
  EXPECT_TRUE(fs::exists(out / "archive_t2.csv"));
  EXPECT_TRUE(fs::exists(out / "kappa_pmf.csv"));

  const auto ref = cli({"refine", "-c", cfg.string(), "--out", out.string(), "--archive",
                        (out / "archive_t2.csv").string()});
  ASSERT_EQ(ref.code, 0) << ref.err;
  EXPECT_TRUE(fs::exists(out / "adjusted.csv"));
  EXPECT_TRUE(fs::exists(out / "posterior_summary.txt"));
  EXPECT_TRUE(fs::exists(out / "posterior_m.csv"));

  EXPECT_EQ(cli({"summarize", (out / "archive_t2.csv").string()}).code, 0);
  EXPECT_EQ(cli({"summarize", (out / "adjusted.csv").string()}).code, 0);
  EXPECT_EQ(cli({"summarize", (workdir() / "toy.cfg").string()}).code, 2);
}

TEST(Cli, RefineRejectsForeignArchive) {
  write("toy.csv", kToyData);
  const auto cfg = write("toy.cfg", kToyConfig);
  const fs::path out = workdir() / "o4";
  ASSERT_EQ(cli({"smc", "-c", cfg.string(), "--out", out.string()}).code, 0);
  const auto other = write("other.cfg", kToyConfig + "tuning_a = 10\n");
  EXPECT_EQ(cli({"refine", "-c", other.string(), "--out", out.string(), "--archive", (out / "archive_t2.csv").string()})
                .code,
            1);
  const auto data2 = write("toy2.csv", "index,value\n0,1\n1,2\n2,4\n3,6\n4,11\n5,19\n6,31\nphi,17\n");
  EXPECT_EQ(cli({"refine", "-c", cfg.string(), "--data", data2.string(), "--out", out.string(), "--archive",
                 (out / "archive_t2.csv").string()})
                .code,
            2);
}
