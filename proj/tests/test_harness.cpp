#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sandpile/experiments.hpp"

namespace sandpile::harness {
namespace {

namespace fs = std::filesystem;

ExperimentSpec make_spec(std::string name, std::vector<int> box, std::uint64_t samples = 1000) {
  ExperimentSpec s;
  s.experiment = std::move(name);
  s.d = static_cast<int>(box.size());
  s.box = std::move(box);
  s.samples = samples;
  s.seed = 42;
  return s;
}

const Row& find_row(const ExperimentReport& rep, const std::string& name) {
  for (const auto& r : rep.rows)
    if (r.name == name) return r;
  throw std::out_of_range("no row " + name);
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("sandpile_test_" + name); }

TEST(ParseBox, Examples) {
  EXPECT_EQ(parse_box("2x2", 2), (std::vector<int>{2, 2}));
  EXPECT_EQ(parse_box("16", 3), (std::vector<int>{16, 16, 16}));
  EXPECT_EQ(parse_box("3x2x1", 3), (std::vector<int>{3, 2, 1}));
  EXPECT_THROW(parse_box("2x", 2), std::invalid_argument);
  EXPECT_THROW(parse_box("2x2", 3), std::invalid_argument);
  EXPECT_THROW(parse_box("0x2", 2), std::invalid_argument);
  EXPECT_THROW(parse_box("ax2", 2), std::invalid_argument);
}

TEST(Config, OverridesFields) {
  const auto path = temp_file("config.txt");
  {
    std::ofstream f(path);
    f << "# comment\nexperiment = dhar-check\nd = 3\nbox = 2\nsamples=77\nseed = 9  # trailing\nformat = \"json\"\nnested = 4,6\n";
  }
  ExperimentSpec s = make_spec("det-identity", {2, 2});
  std::string box;
  apply_config(s, read_config_file(path.string()), &box);
  EXPECT_EQ(s.experiment, "dhar-check");
  EXPECT_EQ(s.d, 3);
  EXPECT_EQ(box, "2");
  EXPECT_EQ(s.samples, 77u);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.format, "json");
  EXPECT_EQ(s.nested, (std::vector<int>{4, 6}));

  std::map<std::string, std::string> bad{{"colour", "red"}};
  EXPECT_THROW(apply_config(s, bad, &box), std::invalid_argument);
  EXPECT_THROW(read_config_file("/nonexistent/config"), std::runtime_error);
  fs::remove(path);
}

TEST(RunExperiment, DetIdentityTwoByTwo) {
  const auto rep = run_experiment(make_spec("det-identity", {2, 2}));
  const Row& r = find_row(rep, "recurrent_count");
  EXPECT_EQ(r.estimate, "192");
  EXPECT_EQ(r.target, "192");
  EXPECT_EQ(r.tolerance, "exact");
  EXPECT_TRUE(rep.all_pass());
}

TEST(RunExperiment, DharCheckSingleSite) {
  const auto rep = run_experiment(make_spec("dhar-check", {1, 1}));
  const Row& r = find_row(rep, "mean_N[x=0][y=0]");
  EXPECT_EQ(r.estimate, "1/4");
  EXPECT_EQ(r.target, "1/4");
  EXPECT_EQ(r.pass, true);
}

TEST(RunExperiment, Errors) {
  EXPECT_THROW(run_experiment(make_spec("no-such-thing", {2, 2})), std::invalid_argument);
  EXPECT_THROW(run_experiment(make_spec("det-identity", {5, 5})), InfeasibleSize);
  EXPECT_THROW(run_experiment(make_spec("det-identity", {0, 2})), std::invalid_argument);
  EXPECT_THROW(run_experiment(make_spec("ust-uniformity", {2, 2}, 10)), std::invalid_argument);
  auto s = make_spec("det-identity", {2, 2});
  s.samples = 0;
  EXPECT_THROW(run_experiment(s), std::invalid_argument);
  s = make_spec("det-identity", {2, 2});
  s.origin = Point{5, 5};
  EXPECT_THROW(run_experiment(s), std::invalid_argument);

  const auto rep = run_experiment(make_spec("det-identity", {2, 1}));
  EXPECT_THROW(write_report(rep, "/nonexistent/dir/out.csv"), std::runtime_error);
}

TEST(Output, CsvAndJsonMirrorRows) {
  ExperimentReport rep;
  rep.spec = make_spec("det-identity", {2, 2});
  rep.rows.push_back({"a,b", "1", 0.5, "1", "exact", true});
  rep.rows.push_back({"c", "2", std::nullopt, "", "", std::nullopt});
  EXPECT_EQ(to_csv(rep), "name,estimate,stderr,target,tolerance,pass\n\"a,b\",1,0.5,1,exact,true\nc,2,,,,\n");
  const auto j = nlohmann::json::parse(to_json(rep));
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["name"], "a,b");
  EXPECT_EQ(j["rows"][0]["stderr"], 0.5);
  EXPECT_TRUE(j["rows"][1]["pass"].is_null());
  EXPECT_EQ(j["spec"]["experiment"], "det-identity");
  EXPECT_TRUE(j.contains("wall_clock_seconds"));
  EXPECT_FALSE(nlohmann::json::parse(to_json(rep, false)).contains("wall_clock_seconds"));
}

TEST(Replicas, FoldIsInReplicaOrder) {
  struct Seq {
    std::vector<std::uint64_t> v;
    void merge(const Seq& o) { v.insert(v.end(), o.v.begin(), o.v.end()); }
  };
  setenv(kThreadsEnv, "4", 1);
  const Seq s = run_replicated<Seq>(103, 7, [] { return Seq{}; }, [](Seq& a, std::uint64_t i) { a.v.push_back(i); });
  unsetenv(kThreadsEnv);
  ASSERT_EQ(s.v.size(), 103u);
  for (std::uint64_t i = 0; i < 103; ++i) EXPECT_EQ(s.v[i], i);
}

TEST(Replicas, ExceptionsPropagate) {
  setenv(kThreadsEnv, "3", 1);
  auto boom = [] {
    return run_replicated<Tally>(10, 3, [] { return Tally(1); }, [](Tally&, std::uint64_t i) {
      if (i == 7) throw std::runtime_error("boom");
    });
  };
  EXPECT_THROW(boom(), std::runtime_error);
  unsetenv(kThreadsEnv);
}

class Reproducible : public ::testing::TestWithParam<ExperimentSpec> {};

TEST_P(Reproducible, SameSeedSameBytesAnyReplicaCount) {
  setenv(kThreadsEnv, "4", 1);
  ExperimentSpec s = GetParam();
  const std::string once = to_csv(run_experiment(s));
  EXPECT_EQ(to_csv(run_experiment(s)), once);
  s.replicas = 5;
  EXPECT_EQ(to_csv(run_experiment(s)), once);
  s.format = "json";
  s.replicas = 1;
  const auto j1 = nlohmann::json::parse(to_json(run_experiment(s), false));
  s.replicas = 3;
  EXPECT_EQ(nlohmann::json::parse(to_json(run_experiment(s), false))["rows"], j1["rows"]);
  unsetenv(kThreadsEnv);
}

ExperimentSpec nested(std::string name, int d, std::vector<int> sides, std::uint64_t samples) {
  ExperimentSpec s = make_spec(std::move(name), std::vector<int>(d, sides.back()), samples);
  s.nested = std::move(sides);
  return s;
}

INSTANTIATE_TEST_SUITE_P(AllExperiments, Reproducible,
                         ::testing::Values(make_spec("det-identity", {2, 2}), make_spec("dhar-check", {6, 6}, 500),
                                           make_spec("bijection-roundtrip", {2, 2}), make_spec("ust-uniformity", {2, 1}, 500),
                                           make_spec("stationarity", {2, 1}, 500), make_spec("wave-tree-identity", {5, 5}, 300),
                                           make_spec("removal-ratio", {3, 3}), nested("avalanche-stats", 3, {4, 6}, 300),
                                           nested("two-component-size", 3, {4, 6}, 300), nested("monotone-edge-prob", 2, {4, 6}, 300)));

#ifdef SANDPILE_CLI
int run_cli(const std::string& args) {
  const int status = std::system((std::string(SANDPILE_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("det-identity --d 2 --box 2x2"), 0);
  EXPECT_EQ(run_cli("bogus"), 2);
  EXPECT_EQ(run_cli("det-identity --box 5x5"), 2);
  EXPECT_EQ(run_cli("det-identity --out /nonexistent/dir/x.csv"), 2);
  EXPECT_EQ(run_cli("det-identity --format xml"), 2);
  EXPECT_EQ(run_cli("--list"), 0);
}

TEST(Cli, ConfigOverridesFlags) {
  const auto cfg = temp_file("cli.conf");
  const auto out = temp_file("cli.csv");
  {
    std::ofstream f(cfg);
    f << "box = 2x1\nout = " << out.string() << "\n";
  }
  ASSERT_EQ(run_cli("det-identity --box 2x2 --config " + cfg.string()), 0);
  EXPECT_EQ(slurp(out), "name,estimate,stderr,target,tolerance,pass\nrecurrent_count,15,,15,exact,true\n");
  fs::remove(cfg);
  fs::remove(out);
}

TEST(Cli, JsonOutput) {
  const auto out = temp_file("cli.json");
  ASSERT_EQ(run_cli("dhar-check --box 1x1 --format json --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["rows"][0]["estimate"], "1/4");
  EXPECT_EQ(j["all_pass"], true);
  fs::remove(out);
}
#endif

}  // namespace
}  // namespace sandpile::harness
