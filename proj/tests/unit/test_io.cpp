#include "cbp/errors.hpp"
#include "cbp/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

using namespace cbp;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
  try {
    (void)RunConfig::parse(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cbp_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

} // namespace

TEST(Config, ParsesShippedCase) {
  const auto cfg = RunConfig::load(std::string(CBP_DATA_DIR) + "/case1.cfg");
  EXPECT_EQ(cfg.kappa_max, 15);
  EXPECT_EQ(cfg.pool_sizes, (std::vector<std::size_t>{8000, 40000, 200000}));
  EXPECT_EQ(cfg.stage2_source, StageTwoSource::pool);
  EXPECT_DOUBLE_EQ(offspring_mean(cfg.offspring_law()), 3.6);
  EXPECT_EQ(cfg.observations_path(), fs::path(CBP_DATA_DIR) / "case1.csv");
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(config_error("seed = 1\nbogus = 2\n").rfind("t.cfg:2:", 0), 0u);
  EXPECT_NE(config_error("seed = 1\nbogus = 2\n").find("unknown key 'bogus'"), std::string::npos);
  EXPECT_EQ(config_error("# c\n\nparticles = x\n").rfind("t.cfg:3:", 0), 0u);
  EXPECT_NE(config_error("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(config_error("gamma_prior = uniform(1,2)\n").find("beta"), std::string::npos);
  EXPECT_NE(config_error("control = hassell\n").find("shape"), std::string::npos);
  EXPECT_EQ(config_error("particles = 100\npool_sizes = 50,200\n").rfind("t.cfg:2:", 0), 0u);
  EXPECT_NE(config_error("just text\n").find("key = value"), std::string::npos);
  EXPECT_NE(config_error("gamma = 1.5\n").find("gamma"), std::string::npos);
}

TEST(Config, HashIgnoresSeedAndStageTwo) {
  const auto a = RunConfig::parse("seed = 1\nkappa_max = 5\nkeep_fraction = 0.2\n");
  const auto b = RunConfig::parse("seed = 9\nkappa_max = 5\nkeep_fraction = 0.5\nthreads = 4\n");
  const auto c = RunConfig::parse("seed = 1\nkappa_max = 6\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, OffspringForms) {
  EXPECT_DOUBLE_EQ(offspring_mean(RunConfig::parse("offspring = geometric(0.4)\n").offspring_law()), 1.5);
  EXPECT_DOUBLE_EQ(offspring_mean(RunConfig::parse("offspring = pmf(0.5,0,0.5)\n").offspring_law()), 1.0);
  EXPECT_THROW(RunConfig::parse("offspring = poisson(2)\n"), ConfigError);
}

TEST(Observations, SealsFixture) {
  const auto obs = load_observations(std::string(CBP_DATA_DIR) + "/seals.csv");
  EXPECT_EQ(obs.sizes.size(), 25u);
  EXPECT_EQ(obs.observed_count(), 22u);
  EXPECT_FALSE(obs.sizes[4]);
  EXPECT_FALSE(obs.sizes[15]);
  EXPECT_FALSE(obs.sizes[23]);
  EXPECT_FALSE(obs.last_progenitors);
  EXPECT_EQ(*obs.sizes[0], 1694);
}

TEST(Observations, ParseErrors) {
  EXPECT_THROW(parse_observations(""), ParseError);
  EXPECT_THROW(parse_observations("index,value\n"), ParseError);
  EXPECT_THROW(parse_observations("index,value\n0,1\n1,abc\n"), ParseError);
  EXPECT_THROW(parse_observations("index,value\n0,1\n2,3\n"), DataError);
  EXPECT_THROW(parse_observations("index,value\n0,1\n1,-3\n"), DataError);
  try {
    parse_observations("index,value\n0,1\n1,abc\n");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos);
  }
}

TEST(Observations, RoundTrip) {
  const auto obs = parse_observations("index,value\n0,1\n1,NA\n2,7\nphi,5\n");
  EXPECT_EQ(parse_observations(format_observations(obs)).sizes, obs.sizes);
  EXPECT_EQ(parse_observations(format_observations(obs)).last_progenitors, obs.last_progenitors);
  EXPECT_EQ(observations_hash(obs), observations_hash(parse_observations(format_observations(obs))));
}

TEST(Doubles, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17}) {
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
}

TEST(Archive, BitExactRoundTrip) {
  const auto obs = parse_observations("index,value\n0,1\n1,3\n2,6\n3,11\nphi,4\n");
  const SmcProblem problem(obs, ControlLaw::binomial_xi(0.5), PriorSpec::make(4, ControlPrior::beta(1, 1)));
  SmcConfig cfg;
  cfg.particles = 30;
  cfg.schedule = ToleranceSchedule::from_pools({300, 600}, 30);
  cfg.retain_final_pool = true;
  const auto history = run_smc(problem, cfg);
  auto archive = make_archive(history.back(), problem, 1234, "run-x");
  archive.kappa_hat = 3;
  const auto path = scratch("archive.csv");
  save_archive(path, archive);
  EXPECT_TRUE(fs::exists(trajectory_sidecar(path)));
  const auto back = load_archive(path);
  EXPECT_EQ(back, archive);
  save_archive(scratch("archive2.csv"), back);
  EXPECT_EQ(read_file(path), read_file(scratch("archive2.csv")));
}

TEST(Archive, RejectsGarbage) {
  const auto path = scratch("garbage.csv");
  write_file_atomic(path, "not an archive\n");
  EXPECT_THROW(load_archive(path), ParseError);
}

TEST(Adjusted, RoundTrip) {
  std::vector<AdjustedRow> rows(2);
  rows[0].probs = {0.1, 0.2, 0.7};
  rows[0].gamma = 0.7;
  rows[0].weight = 0.25;
  rows[1].probs = {0.3, 0.3, 0.5};
  rows[1].gamma = 1.0 / 3.0;
  rows[1].weight = 0.75;
  const auto sample = finalize_adjusted(2, rows, AdjustStatus::adjusted, ControlLaw::binomial_xi(0.5));
  const auto back = parse_adjusted(format_adjusted(sample));
  EXPECT_EQ(format_adjusted(back), format_adjusted(sample));
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].raw_sum, sample.rows[1].raw_sum);
  EXPECT_EQ(back.rows[1].derived, sample.rows[1].derived);
  EXPECT_EQ(back.renormalized, sample.renormalized);
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  const auto path = scratch("atomic.txt");
  write_file_atomic(path, "hello\n");
  write_file_atomic(path, "world\n");
  EXPECT_EQ(read_file(path), "world\n");
  for (const auto& e : fs::directory_iterator(path.parent_path())) {
    EXPECT_EQ(e.path().string().find(".tmp"), std::string::npos);
  }
  EXPECT_THROW(read_file(scratch("missing.txt")), DataError);
}
