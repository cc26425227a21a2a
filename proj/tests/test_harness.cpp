#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetloc/errors.hpp"
#include "hetloc/harness.hpp"

using namespace hetloc;
using namespace hetloc::harness;

namespace {

ModelSettings quick_model(std::size_t epochs) {
  ModelSettings m;
  m.hidden_layers = {32, 16};
  m.epochs = epochs;
  m.fine_tune_epochs = epochs;
  return m;
}

SampleSizes small_sizes() { return {10, 5, 5}; }

// Few enough towers that every scan hears all of them.
SyntheticScenario open_field(double offset) {
  SyntheticScenario s;
  s.world.width_m = 300;
  s.world.height_m = 200;
  s.world.tower_count = 6;
  s.world.hearability_floor_dbm = -1000;
  s.world.seed = 14;
  s.devices = {{"A", 1.0, 0.0, 0.0, 0.0}, {"B", 1.0, offset, 0.0, 0.0}};
  return s;
}

ExperimentSpec spec_for(const SyntheticScenario& scenario, std::string master, std::string slave,
                        Technique t, std::size_t epochs = 20) {
  ExperimentSpec s;
  s.name = "t";
  s.source = scenario;
  s.master_device = std::move(master);
  s.slave_device = std::move(slave);
  s.technique = t;
  s.seed = 5;
  s.sizes = small_sizes();
  s.model = quick_model(epochs);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("percentiles interpolate between order statistics") {
  const std::vector<double> v{40, 10, 30, 20};
  CHECK(percentile(v, 50) == doctest::Approx(25.0));
  CHECK(percentile(v, 0) == 10.0);
  CHECK(percentile(v, 100) == 40.0);
  CHECK(percentile(v, 25) == doctest::Approx(17.5));
  CHECK(percentile(std::vector<double>{7}, 75) == 7.0);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), ArgumentError);
  CHECK_THROWS_AS(percentile(v, 101), ArgumentError);
}

TEST_CASE("empirical CDF") {
  const auto cdf = empirical_cdf(std::vector<double>{3, 1, 2, 2});
  REQUIRE(cdf.size() == 4);
  CHECK(cdf[0].error_m == 1.0);
  CHECK(cdf[0].cumulative_fraction == 0.25);
  CHECK(cdf[3].error_m == 3.0);
  CHECK(cdf[3].cumulative_fraction == 1.0);
}

TEST_CASE("relative change is the baseline's degradation over the handled result") {
  CHECK(relative_change_pct(24, 77) == doctest::Approx(220.833).epsilon(1e-4));
  CHECK(relative_change_pct(22, 85) == doctest::Approx(286.364).epsilon(1e-4));
  CHECK(relative_change_pct(29, 334) == doctest::Approx(1051.72).epsilon(1e-4));
  CHECK(relative_change_pct(50, 25) < 0.0);
  CHECK_THROWS_AS(relative_change_pct(0, 10), ArgumentError);
}

TEST_CASE("technique names") {
  for (auto t : kAllTechniques) CHECK(parse_technique(to_string(t)) == t);
  CHECK_THROWS_AS(parse_technique("magic"), ArgumentError);
}

TEST_CASE("reports are deterministic") {
  const auto s = spec_for(urban_scenario(3), "A", "B", Technique::linear, 5);
  const auto a = run_experiment(s), b = run_experiment(s);
  CHECK(a.errors_m == b.errors_m);
  CHECK(a.p50 == b.p50);
  CHECK(a.errors_m.size() == 20 * 5);
  CHECK(a.adaptation_samples > 0);
}

TEST_CASE("difference features undo a constant offset when every tower is heard") {
  const auto same = run_experiment(spec_for(open_field(0.0), "A", "A", Technique::difference));
  const auto offset = run_experiment(spec_for(open_field(10.0), "A", "B", Technique::difference));
  CHECK(offset.errors_m == same.errors_m);
}

TEST_CASE("same-device baseline lands within a cell at the median") {
  auto s = spec_for(urban_scenario(1), "A", "A", Technique::none, 40);
  s.sizes = {50, 5, 10};
  s.model = ModelSettings{};
  s.model.epochs = 40;
  const auto r = run_experiment(s);
  MESSAGE("same-device p50 " << r.p50 << " m");
  CHECK(r.p50 <= 100.0);
}

TEST_CASE("every technique runs on the synthetic matrix and outputs are written") {
  StandardMatrixOptions opt;
  opt.seed = 9;
  opt.experiments = {"I", "III"};
  opt.sizes = small_sizes();
  opt.model = quick_model(3);
  const auto specs = standard_matrix(opt);
  REQUIRE(specs.size() == 12);
  const auto result = run_matrix(specs, 2);
  CHECK(result.ok());
  for (const auto& row : result.rows) CHECK_MESSAGE(row.report.has_value(), row.error);
  REQUIRE(result.summary.size() == 4);
  CHECK(result.summary[0].handling == "enabled");
  CHECK(result.summary[1].handling == "disabled");
  CHECK(result.summary[1].technique == Technique::none);
  REQUIRE(result.summary[1].change_pct.has_value());
  CHECK((*result.summary[1].change_pct)[1] ==
        doctest::Approx(relative_change_pct(result.summary[0].p50, result.summary[1].p50)));

  const auto dir = std::filesystem::temp_directory_path() / "hetloc_test_matrix";
  std::filesystem::remove_all(dir);
  write_matrix_outputs(result, dir);
  CHECK(std::filesystem::exists(dir / "results.csv"));
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "cdf_III_multitask.csv"));
  CHECK_FALSE(std::filesystem::exists(dir / "failures.csv"));
  const auto results = slurp(dir / "results.csv");
  CHECK(results.rfind("experiment,technique,percentile,error_m\n", 0) == 0);
  CHECK(std::count(results.begin(), results.end(), '\n') == 1 + 12 * 3);
}

TEST_CASE("standard matrix covers the four experiments") {
  const auto specs = standard_matrix({});
  CHECK(specs.size() == 24);
  CHECK(specs[0].master_device == "A");
  CHECK(specs[6].master_device == "B");
  CHECK(specs[12].master_device == "C");
  CHECK(specs[18].slave_device == "C");
  StandardMatrixOptions bad;
  bad.experiments = {"V"};
  CHECK_THROWS_AS(standard_matrix(bad), ArgumentError);
}

TEST_CASE("matrix errors") {
  CHECK_THROWS_AS(run_matrix({}), ArgumentError);

  auto corpus = std::make_shared<ScanCorpus>(
      ScanCorpus{Site{TowerInventory({"a", "b"}), Grid({0, 0}, 1, 1, 1)}, {}});
  ExperimentSpec s;
  s.name = "broken";
  s.source = std::shared_ptr<const ScanCorpus>(corpus);
  s.master_device = "A";
  s.slave_device = "B";
  const std::vector<ExperimentSpec> specs{s};
  const auto result = run_matrix(specs, 1);
  CHECK_FALSE(result.ok());
  CHECK(result.rows[0].error.find("no scans for device") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "hetloc_test_matrix_fail";
  std::filesystem::remove_all(dir);
  write_matrix_outputs(result, dir);
  CHECK(slurp(dir / "failures.csv").find("broken,none") != std::string::npos);
}

TEST_CASE("recorded corpora missing a role are reported") {
  auto scenario = urban_scenario(2);
  auto s = spec_for(scenario, "A", "B", Technique::linear, 1);
  ScanCorpus corpus = materialize(s);
  corpus.devices["B"].calibration.clear();
  CHECK_THROWS_AS(run_experiment(s, corpus), ConfigError);
  CHECK_THROWS_AS(scenario.device("Z"), LookupError);
}
