#include "hetloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "hetloc/adapt.hpp"
#include "hetloc/errors.hpp"
#include "hetloc/features.hpp"
#include "hetloc/random.hpp"

namespace hetloc::harness {

std::string_view to_string(Technique technique) {
  switch (technique) {
    case Technique::none: return "none";
    case Technique::linear: return "linear";
    case Technique::ratio: return "ratio";
    case Technique::difference: return "difference";
    case Technique::transfer: return "transfer";
    case Technique::multitask: return "multitask";
  }
  return "none";
}

Technique parse_technique(std::string_view name) {
  for (Technique t : kAllTechniques) {
    if (to_string(t) == name) return t;
  }
  throw ArgumentError("unknown technique '" + std::string(name) + "'");
}

const worldgen::DeviceProfile& SyntheticScenario::device(std::string_view id) const {
  for (const auto& d : devices) {
    if (d.device_id == id) return d;
  }
  throw LookupError("scenario has no device '" + std::string(id) + "'");
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw ArgumentError("percentile of an empty list");
  if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<ingest::CdfPoint> empirical_cdf(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<ingest::CdfPoint> cdf;
  cdf.reserve(sorted.size());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cdf.push_back({sorted[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

double relative_change_pct(double enabled, double disabled) {
  if (!(enabled > 0.0)) throw ArgumentError("relative change needs a positive enabled value");
  return (disabled - enabled) / enabled * 100.0;
}

namespace {

enum class Role { train, calibration, test };

bool needs_calibration(Technique t) { return t == Technique::linear || t == Technique::transfer; }

std::uint64_t role_seed(std::uint64_t seed, Role role, std::string_view device) {
  switch (role) {
    // Per-device drives for training; shared drives (paired in time) for calibration and test.
    case Role::train: return derive_seed(derive_seed(seed, "train"), device);
    case Role::calibration: return derive_seed(seed, "calibration");
    case Role::test: return derive_seed(seed, "test");
  }
  return seed;
}

}  // namespace

ScanCorpus materialize(const ExperimentSpec& spec) {
  if (const auto* corpus = std::get_if<std::shared_ptr<const ScanCorpus>>(&spec.source)) {
    if (!*corpus) throw ConfigError("experiment '" + spec.name + "' has a null scan corpus");
    return **corpus;
  }
  const auto& scenario = std::get<SyntheticScenario>(spec.source);
  const worldgen::World world = worldgen::generate_world(scenario.world);
  ScanCorpus corpus{world.site, {}};

  const Technique t = spec.technique;
  auto gen = [&](const std::string& device, Role role, std::size_t per_cell) {
    return worldgen::generate_scans(world, scenario.device(device), per_cell,
                                    role_seed(spec.seed, role, device));
  };
  DeviceScans& master = corpus.devices[spec.master_device];
  master.train = gen(spec.master_device, Role::train, spec.sizes.train_per_cell);
  if (t == Technique::linear) {
    master.calibration = gen(spec.master_device, Role::calibration, spec.sizes.calibration_per_cell);
  }
  DeviceScans& slave = corpus.devices[spec.slave_device];
  slave.test = gen(spec.slave_device, Role::test, spec.sizes.test_per_cell);
  if (needs_calibration(t)) {
    slave.calibration = gen(spec.slave_device, Role::calibration, spec.sizes.calibration_per_cell);
  }
  if (t == Technique::multitask && slave.train.empty()) {
    slave.train = gen(spec.slave_device, Role::train, spec.sizes.train_per_cell);
  }
  return corpus;
}

namespace {

const DeviceScans& device_scans(const ScanCorpus& corpus, const std::string& device) {
  auto it = corpus.devices.find(device);
  if (it == corpus.devices.end()) throw ConfigError("no scans for device '" + device + "'");
  return it->second;
}

const std::vector<RssScan>& require(const std::vector<RssScan>& scans, const std::string& device,
                                    std::string_view role, const ExperimentSpec& spec) {
  if (scans.empty()) {
    throw ConfigError("experiment '" + spec.name + "' (" + std::string(to_string(spec.technique)) +
                      ") needs " + std::string(role) + " scans for device '" + device + "'");
  }
  return scans;
}

net::MlpConfig model_config(const ExperimentSpec& spec, std::size_t input_width, std::size_t classes) {
  net::MlpConfig cfg;
  cfg.layer_sizes.clear();
  cfg.layer_sizes.push_back(input_width);
  for (std::size_t h : spec.model.hidden_layers) cfg.layer_sizes.push_back(h);
  cfg.layer_sizes.push_back(classes);
  cfg.learning_rate = spec.model.learning_rate;
  cfg.batch_size = spec.model.batch_size;
  cfg.dropout_rate = spec.model.dropout_rate;
  cfg.epochs = spec.model.epochs;
  cfg.standardize_inputs = spec.model.standardize_inputs;
  cfg.seed = derive_seed(spec.seed, "model");
  return cfg;
}

net::MlpModel train_single(const ExperimentSpec& spec, const Dataset& data) {
  net::MlpModel model = net::init_model(model_config(spec, data.feature_width(), data.grid.cell_count()));
  net::train(model, data);
  return model;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  return run_experiment(spec, materialize(spec));
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const ScanCorpus& corpus) {
  const TowerInventory& inventory = corpus.site.inventory;
  const Grid& grid = corpus.site.grid;
  const DeviceScans& master = device_scans(corpus, spec.master_device);
  const DeviceScans& slave = device_scans(corpus, spec.slave_device);
  const auto& master_train = require(master.train, spec.master_device, "training", spec);
  const auto& slave_test = require(slave.test, spec.slave_device, "test", spec);

  ExperimentReport report;
  report.name = spec.name;
  report.technique = spec.technique;
  report.master_device = spec.master_device;
  report.slave_device = spec.slave_device;
  report.strategy = spec.strategy;
  report.seed = spec.seed;

  net::MlpModel model;
  std::string head(net::kDefaultHead);
  std::optional<Dataset> test;

  switch (spec.technique) {
    case Technique::none:
    case Technique::linear: {
      const Dataset train = ingest::build_dataset(master_train, inventory, grid, FeatureMode::raw);
      model = train_single(spec, train);
      report.train_samples = train.size();
      if (spec.technique == Technique::none) {
        test = ingest::build_dataset(slave_test, inventory, grid, FeatureMode::raw);
      } else {
        const auto& mc = require(master.calibration, spec.master_device, "calibration", spec);
        const auto& sc = require(slave.calibration, spec.slave_device, "calibration", spec);
        const auto pairs = features::calibration_pairs(mc, sc, inventory, spec.pairing_window_s);
        if (pairs.empty()) {
          throw ConfigError("experiment '" + spec.name + "': no calibration scans paired within " +
                            std::to_string(spec.pairing_window_s) + " s");
        }
        const features::LinearMap map = features::fit_linear_map(pairs);
        report.adaptation_samples = pairs.size();
        test = ingest::build_dataset(slave_test, inventory, grid, FeatureMode::raw, &map);
      }
      break;
    }
    case Technique::ratio:
    case Technique::difference: {
      const FeatureMode mode =
          spec.technique == Technique::ratio ? FeatureMode::ratio : FeatureMode::difference;
      const Dataset train = ingest::build_dataset(master_train, inventory, grid, mode);
      model = train_single(spec, train);
      report.train_samples = train.size();
      test = ingest::build_dataset(slave_test, inventory, grid, mode);
      break;
    }
    case Technique::transfer: {
      const Dataset train = ingest::build_dataset(master_train, inventory, grid, FeatureMode::raw);
      const net::MlpModel base = train_single(spec, train);
      const Dataset tune = ingest::build_dataset(
          require(slave.calibration, spec.slave_device, "calibration", spec), inventory, grid,
          FeatureMode::raw);
      adapt::TransferPlan plan;
      plan.fine_tune_epochs = spec.model.fine_tune_epochs;
      plan.fine_tune_rate = spec.model.fine_tune_rate;
      plan.target_head = spec.slave_device;
      plan.copy_base_head = spec.model.copy_master_head;
      plan.seed = derive_seed(spec.seed, "transfer-head");
      model = adapt::transfer_fine_tune(base, tune, plan);
      if (model.has_head(spec.slave_device)) head = spec.slave_device;
      report.train_samples = train.size();
      report.adaptation_samples = tune.size();
      test = ingest::build_dataset(slave_test, inventory, grid, FeatureMode::raw);
      break;
    }
    case Technique::multitask: {
      const Dataset master_ds = ingest::build_dataset(master_train, inventory, grid, FeatureMode::raw);
      adapt::MultitaskPlan plan;
      plan.devices.emplace(spec.master_device, std::cref(master_ds));
      std::optional<Dataset> slave_ds;
      if (spec.slave_device != spec.master_device) {
        slave_ds = ingest::build_dataset(require(slave.train, spec.slave_device, "training", spec),
                                         inventory, grid, FeatureMode::raw);
        plan.devices.emplace(spec.slave_device, std::cref(*slave_ds));
      }
      model = adapt::multitask_train(
          plan, model_config(spec, master_ds.feature_width(), grid.cell_count()));
      head = spec.slave_device;
      report.train_samples = master_ds.size();
      report.adaptation_samples = slave_ds ? slave_ds->size() : 0;
      test = ingest::build_dataset(slave_test, inventory, grid, FeatureMode::raw);
      break;
    }
  }

  report.errors_m.reserve(test->size());
  for (const auto& s : test->samples) {
    const Point p = net::predict_location(model, s.features, head, grid, spec.strategy);
    report.errors_m.push_back(distance(p, s.position));
  }
  report.p25 = percentile(report.errors_m, 25.0);
  report.p50 = percentile(report.errors_m, 50.0);
  report.p75 = percentile(report.errors_m, 75.0);
  report.cdf = empirical_cdf(report.errors_m);
  return report;
}

bool MatrixResult::ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const MatrixRow& r) { return r.report.has_value(); });
}

std::vector<SummaryRow> summarize(std::span<const MatrixRow> rows) {
  std::vector<std::string> names;
  for (const auto& r : rows) {
    if (std::find(names.begin(), names.end(), r.experiment) == names.end()) names.push_back(r.experiment);
  }
  std::vector<SummaryRow> out;
  for (const auto& name : names) {
    const ExperimentReport* disabled = nullptr;
    const ExperimentReport* enabled = nullptr;
    for (const auto& r : rows) {
      if (r.experiment != name || !r.report) continue;
      if (r.technique == Technique::none) {
        disabled = &*r.report;
      } else if (!enabled || r.report->p50 < enabled->p50) {
        enabled = &*r.report;
      }
    }
    auto make = [&](const ExperimentReport& rep, std::string handling) {
      return SummaryRow{name, std::move(handling), rep.technique, rep.p25, rep.p50, rep.p75, std::nullopt};
    };
    if (enabled) out.push_back(make(*enabled, "enabled"));
    if (disabled) {
      SummaryRow row = make(*disabled, "disabled");
      if (enabled && enabled->p25 > 0.0 && enabled->p50 > 0.0 && enabled->p75 > 0.0) {
        row.change_pct = std::array<double, 3>{relative_change_pct(enabled->p25, disabled->p25),
                                               relative_change_pct(enabled->p50, disabled->p50),
                                               relative_change_pct(enabled->p75, disabled->p75)};
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

MatrixResult run_matrix(std::span<const ExperimentSpec> specs, std::size_t threads) {
  if (specs.empty()) throw ArgumentError("run_matrix: no experiment specs");
  MatrixResult result;
  result.rows.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    result.rows[i].experiment = specs[i].name;
    result.rows[i].technique = specs[i].technique;
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, specs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        result.rows[i].report = run_experiment(specs[i]);
      } catch (const std::exception& e) {
        result.rows[i].error = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  result.summary = summarize(result.rows);
  return result;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  out.setf(std::ios::fixed);
  out.precision(3);
  return out;
}

}  // namespace

void write_matrix_outputs(const MatrixResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::vector<ingest::ResultRow> rows;
  for (const auto& r : result.rows) {
    if (!r.report) continue;
    const std::string tech(to_string(r.technique));
    rows.push_back({r.experiment, tech, 25.0, r.report->p25});
    rows.push_back({r.experiment, tech, 50.0, r.report->p50});
    rows.push_back({r.experiment, tech, 75.0, r.report->p75});
    auto cdf = open_csv(dir / ("cdf_" + r.experiment + "_" + tech + ".csv"));
    ingest::write_cdf_csv(cdf, r.report->cdf);
  }
  {
    auto out = open_csv(dir / "results.csv");
    ingest::write_results_csv(out, rows);
  }
  {
    auto out = open_csv(dir / "summary.csv");
    out << "experiment,handling,technique,p25_m,p50_m,p75_m,p25_change_pct,p50_change_pct,p75_change_pct\n";
    for (const auto& s : result.summary) {
      out << s.experiment << ',' << s.handling << ',' << to_string(s.technique) << ',' << s.p25
          << ',' << s.p50 << ',' << s.p75;
      if (s.change_pct) {
        // Printed as a degradation of the disabled row, e.g. -220.8.
        out.precision(1);
        for (double c : *s.change_pct) out << ',' << -c;
        out.precision(3);
      } else {
        out << ",,,";
      }
      out << '\n';
    }
  }
  if (!result.ok()) {
    auto out = open_csv(dir / "failures.csv");
    out << "experiment,technique,error\n";
    for (const auto& r : result.rows) {
      if (r.report) continue;
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << r.experiment << ',' << to_string(r.technique) << ",\"" << msg << "\"\n";
    }
  }
}

SyntheticScenario urban_scenario(std::uint64_t seed) {
  SyntheticScenario s;
  s.world.width_m = 500.0;
  s.world.height_m = 400.0;
  s.world.cell_size_m = 100.0;
  s.world.tower_count = 25;
  s.world.seed = derive_seed(seed, "urban-world");
  s.devices = {{"A", 1.0, 0.0, 0.0, 1.0}, {"B", 1.0, 10.0, 0.0, 1.0}};
  return s;
}

SyntheticScenario rural_scenario(std::uint64_t seed) {
  SyntheticScenario s;
  s.world.width_m = 800.0;
  s.world.height_m = 600.0;
  s.world.cell_size_m = 100.0;
  s.world.tower_count = 16;
  s.world.seed = derive_seed(seed, "rural-world");
  s.devices = {{"C", 1.0, 0.0, 0.0, 1.0}, {"D", 0.85, -12.0, 3.0, 1.5}};
  return s;
}

std::vector<ExperimentSpec> standard_matrix(const StandardMatrixOptions& options) {
  struct Pairing {
    const char* name;
    bool urban;
    const char* master;
    const char* slave;
  };
  static constexpr Pairing kPairings[] = {
      {"I", true, "A", "B"}, {"II", true, "B", "A"}, {"III", false, "C", "D"}, {"IV", false, "D", "C"}};
  const SyntheticScenario urban = urban_scenario(options.seed);
  const SyntheticScenario rural = rural_scenario(options.seed);

  std::vector<ExperimentSpec> specs;
  for (const auto& name : options.experiments) {
    const auto it = std::find_if(std::begin(kPairings), std::end(kPairings),
                                 [&](const Pairing& p) { return name == p.name; });
    if (it == std::end(kPairings)) throw ArgumentError("unknown experiment '" + name + "'");
    for (Technique t : options.techniques) {
      ExperimentSpec spec;
      spec.name = name;
      spec.source = it->urban ? urban : rural;
      spec.master_device = it->master;
      spec.slave_device = it->slave;
      spec.technique = t;
      spec.strategy = options.strategy;
      spec.seed = derive_seed(options.seed, name);
      spec.sizes = options.sizes;
      spec.model = options.model;
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

}  // namespace hetloc::harness
