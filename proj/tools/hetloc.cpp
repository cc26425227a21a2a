// hetloc: synthetic worlds, scan logs, training, calibration, adaptation,
// evaluation and the cross-device experiment matrix from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hetloc/adapt.hpp"
#include "hetloc/errors.hpp"
#include "hetloc/features.hpp"
#include "hetloc/harness.hpp"
#include "hetloc/ingest.hpp"
#include "hetloc/worldgen.hpp"

namespace fs = std::filesystem;
using namespace hetloc;

namespace {

// ---- shared option groups ---------------------------------------------------

struct ModelFlags {
  std::vector<std::size_t> hidden{256, 128, 64};
  double rate = 0.005;
  std::size_t batch = 40;
  double dropout = 0.10;
  std::size_t epochs = 500;
  bool no_standardize = false;

  void attach(CLI::App& app) {
    app.add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
    app.add_option("--rate", rate, "SGD learning rate")->capture_default_str();
    app.add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    app.add_option("--dropout", dropout, "Dropout rate on hidden layers")->capture_default_str();
    app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app.add_flag("--no-standardize", no_standardize, "Feed features to the network unscaled");
  }

  net::MlpConfig config(std::size_t inputs, std::size_t classes, std::uint64_t seed) const {
    net::MlpConfig c;
    c.layer_sizes.assign(1, inputs);
    c.layer_sizes.insert(c.layer_sizes.end(), hidden.begin(), hidden.end());
    c.layer_sizes.push_back(classes);
    c.learning_rate = rate;
    c.batch_size = batch;
    c.dropout_rate = dropout;
    c.epochs = epochs;
    c.seed = seed;
    c.standardize_inputs = !no_standardize;
    return c;
  }
};

struct SiteFlags {
  std::string world;
  double cell_size = 100.0;
  bool latlon = false;

  void attach(CLI::App& app) {
    app.add_option("--world", world, "World JSON whose towers and grid define the site")
        ->check(CLI::ExistingFile);
    app.add_option("--cell-size", cell_size, "Cell size (m) when the grid is derived from scans")
        ->capture_default_str();
    app.add_flag("--latlon", latlon, "Log positions are latitude/longitude");
  }
};

std::vector<RssScan> load_scans(const std::string& path) {
  auto parsed = ingest::read_scan_log(path);
  for (const auto& d : parsed.errors) {
    std::cerr << path << ":" << d.line << ": skipped: " << d.reason << "\n";
  }
  for (const auto& d : parsed.warnings) {
    std::cerr << path << ":" << d.line << ": warning: " << d.reason << "\n";
  }
  if (parsed.scans.empty()) throw ConfigError(path + ": no usable scans");
  return std::move(parsed.scans);
}

std::vector<RssScan> load_all(const std::vector<std::string>& paths) {
  std::vector<RssScan> all;
  for (const auto& p : paths) {
    auto s = load_scans(p);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return all;
}

Site resolve_site(const SiteFlags& flags, std::vector<std::vector<RssScan>*> groups) {
  if (flags.latlon) {
    std::vector<RssScan> pooled;
    for (auto* g : groups) pooled.insert(pooled.end(), g->begin(), g->end());
    const auto projection = ingest::fit_projection(pooled);
    for (auto* g : groups) ingest::project_in_place(*g, projection);
  }
  if (!flags.world.empty()) return ingest::world_from_json(ingest::read_text(flags.world)).site;
  std::vector<RssScan> pooled;
  for (auto* g : groups) pooled.insert(pooled.end(), g->begin(), g->end());
  return {ingest::derive_inventory(pooled), ingest::derive_grid(pooled, flags.cell_size)};
}

const Site& model_site(const net::MlpModel& model) {
  if (!model.site) throw ConfigError("model carries no site (inventory and grid)");
  return *model.site;
}

void write_file(const fs::path& path, const std::string& text) {
  ingest::write_text(path, text);
  std::cout << "wrote " << path.string() << "\n";
}

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  fn(out);
  if (!out) throw IoError("write failed: " + path.string());
  std::cout << "wrote " << path.string() << "\n";
}

std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- genworld ---------------------------------------------------------------

struct GenWorld {
  std::string out;
  std::string scenario = "urban";
  std::uint64_t seed = 0;
  std::optional<std::size_t> towers;
  std::optional<double> width, height, cell_size, sigma, floor;

  int run() const {
    worldgen::WorldConfig c = scenario == "rural" ? harness::rural_scenario(seed).world
                                                  : harness::urban_scenario(seed).world;
    if (towers) c.tower_count = *towers;
    if (width) c.width_m = *width;
    if (height) c.height_m = *height;
    if (cell_size) c.cell_size_m = *cell_size;
    if (sigma) c.shadowing_sigma_db = *sigma;
    if (floor) c.hearability_floor_dbm = *floor;
    const auto world = worldgen::generate_world(c);
    fs::create_directories(out);
    write_file(fs::path(out) / "world.json", ingest::world_to_json(world));
    std::cout << world.towers.size() << " towers, " << world.site.grid.cols() << "x"
              << world.site.grid.rows() << " cells of " << world.site.grid.cell_size() << " m\n";
    return 0;
  }
};

// ---- gendata ----------------------------------------------------------------

struct GenData {
  std::string out;
  std::string world;
  std::string name;
  worldgen::DeviceProfile device{"A"};
  std::size_t per_cell = 50;
  std::uint64_t seed = 0;

  int run() const {
    const auto w = ingest::world_from_json(ingest::read_text(world));
    const auto scans = worldgen::generate_scans(w, device, per_cell, seed);
    fs::create_directories(out);
    const fs::path path = fs::path(out) / ((name.empty() ? device.device_id : name) + ".csv");
    ingest::write_scan_log(path, scans);
    std::cout << "wrote " << path.string() << " (" << scans.size() << " scans)\n";
    return 0;
  }
};

// ---- train ------------------------------------------------------------------

struct Train {
  std::string out;
  std::vector<std::string> logs;
  std::string mode = "raw";
  std::uint64_t seed = 0;
  SiteFlags site;
  ModelFlags model;

  int run() const {
    auto scans = load_all(logs);
    const Site s = resolve_site(site, {&scans});
    const Dataset data = ingest::build_dataset(scans, s.inventory, s.grid, parse_feature_mode(mode));
    if (data.dropped_readings > 0) {
      std::cerr << data.dropped_readings << " readings from towers outside the inventory dropped\n";
    }
    auto m = net::init_model(model.config(data.feature_width(), s.grid.cell_count(), seed));
    const auto log = net::train(m, data);
    m.site = s;
    fs::create_directories(out);
    ingest::save_model(m, fs::path(out) / "model.json");
    std::cout << "wrote " << (fs::path(out) / "model.json").string() << "\n";
    write_stream(fs::path(out) / "training_log.csv", [&](std::ostream& o) {
      o << "epoch,loss\n";
      for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) o << e + 1 << "," << log.epoch_loss[e] << "\n";
    });
    std::cout << data.size() << " samples, final loss "
              << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()) << ", training accuracy "
              << fixed(100.0 * net::accuracy(m, data)) << "%\n";
    return 0;
  }
};

// ---- calibrate --------------------------------------------------------------

struct Calibrate {
  std::string out;
  std::string master, slave;
  std::string model;
  std::int64_t window = 2;
  SiteFlags site;

  int run() const {
    auto m = load_scans(master);
    auto s = load_scans(slave);
    const TowerInventory inventory = model.empty()
                                         ? resolve_site(site, {&m, &s}).inventory
                                         : model_site(ingest::load_model(model)).inventory;
    const auto pairs = features::calibration_pairs(m, s, inventory, window);
    if (pairs.empty()) throw ConfigError("no scans paired within " + std::to_string(window) + " s");
    const auto map = features::fit_linear_map(pairs);
    fs::create_directories(out);
    write_file(fs::path(out) / "linear_map.json", ingest::linear_map_to_json(map, inventory));
    const auto fitted = std::count_if(map.towers.begin(), map.towers.end(),
                                      [](const features::TowerFit& f) { return !f.identity_fallback; });
    std::cout << pairs.size() << " pairs, " << fitted << " of " << map.size() << " towers fitted\n";
    return 0;
  }
};

// ---- adapt ------------------------------------------------------------------

struct Adapt {
  std::string out;
  std::string technique = "transfer";
  std::uint64_t seed = 0;
  // transfer
  std::string model;
  std::string log;
  std::string head;
  std::string base_head{net::kDefaultHead};
  std::size_t fine_tune_epochs = 100;
  double fine_tune_rate = 0.005;
  bool copy_head = false;
  // multitask
  std::vector<std::string> device_logs;
  SiteFlags site;
  ModelFlags flags;

  int run() const {
    net::MlpModel result;
    if (technique == "transfer") {
      if (model.empty() || log.empty()) throw ArgumentError("transfer needs --model and --log");
      const auto base = ingest::load_model(model);
      const Site& s = model_site(base);
      const auto scans = load_scans(log);
      const Dataset data = ingest::build_dataset(scans, s.inventory, s.grid, base.feature_mode);
      adapt::TransferPlan plan;
      plan.fine_tune_epochs = fine_tune_epochs;
      plan.fine_tune_rate = fine_tune_rate;
      plan.base_head = base_head;
      plan.target_head = head.empty() ? scans.front().device_id : head;
      plan.copy_base_head = copy_head;
      plan.seed = seed;
      result = adapt::transfer_fine_tune(base, data, plan);
      std::cout << "head '" << plan.target_head << "' fine-tuned on " << data.size() << " samples\n";
    } else if (technique == "multitask") {
      if (device_logs.empty()) throw ArgumentError("multitask needs --device-log ID=PATH");
      std::map<std::string, std::vector<RssScan>> scans;
      std::vector<std::vector<RssScan>*> groups;
      for (const auto& entry : device_logs) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw ArgumentError("--device-log expects ID=PATH, got '" + entry + "'");
        }
        scans[entry.substr(0, eq)] = load_scans(entry.substr(eq + 1));
      }
      for (auto& [id, sc] : scans) groups.push_back(&sc);
      const Site s = resolve_site(site, groups);
      std::map<std::string, Dataset> data;
      adapt::MultitaskPlan plan;
      for (const auto& [id, sc] : scans) {
        auto [it, _] = data.emplace(id, ingest::build_dataset(sc, s.inventory, s.grid, FeatureMode::raw));
        plan.devices.emplace(id, std::cref(it->second));
      }
      result = adapt::multitask_train(
          plan, flags.config(s.inventory.size(), s.grid.cell_count(), seed));
      result.site = s;
      std::cout << "multitask model with heads:";
      for (const auto& h : result.head_names()) std::cout << " " << h;
      std::cout << "\n";
    } else {
      throw ArgumentError("unknown adaptation technique '" + technique + "'");
    }
    fs::create_directories(out);
    ingest::save_model(result, fs::path(out) / "model.json");
    std::cout << "wrote " << (fs::path(out) / "model.json").string() << "\n";
    return 0;
  }
};

// ---- evaluate ---------------------------------------------------------------

struct Evaluate {
  std::string out;
  std::string model;
  std::string log;
  std::string head;
  std::string calibration;
  std::string strategy = "argmax";
  std::string name = "eval";

  int run() const {
    const auto m = ingest::load_model(model);
    const Site& s = model_site(m);
    const auto scans = load_scans(log);
    std::optional<features::LinearMap> map;
    if (!calibration.empty()) {
      map = ingest::linear_map_from_json(ingest::read_text(calibration), s.inventory);
    }
    const Dataset data = ingest::build_dataset(scans, s.inventory, s.grid, m.feature_mode,
                                               map ? &*map : nullptr);
    const std::string h = head.empty() ? (m.has_head(scans.front().device_id) ? scans.front().device_id
                                                                               : std::string(net::kDefaultHead))
                                       : head;
    const auto decode = net::parse_decode_strategy(strategy);

    std::vector<double> errors;
    fs::create_directories(out);
    write_stream(fs::path(out) / "errors.csv", [&](std::ostream& o) {
      o << "timestamp,x,y,predicted_x,predicted_y,error_m\n";
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& sample = data.samples[i];
        const Point p = net::predict_location(m, sample.features, h, s.grid, decode);
        errors.push_back(distance(p, sample.position));
        o << scans[i].timestamp << "," << sample.position.x << "," << sample.position.y << "," << p.x
          << "," << p.y << "," << fixed(errors.back(), 3) << "\n";
      }
    });
    std::vector<ingest::ResultRow> rows;
    for (double q : {25.0, 50.0, 75.0}) rows.push_back({name, h, q, harness::percentile(errors, q)});
    write_stream(fs::path(out) / "results.csv",
                 [&](std::ostream& o) { ingest::write_results_csv(o, rows); });
    write_stream(fs::path(out) / "cdf.csv", [&](std::ostream& o) {
      ingest::write_cdf_csv(o, harness::empirical_cdf(errors));
    });
    std::cout << "head " << h << ": p25 " << fixed(rows[0].error_m) << " m, p50 "
              << fixed(rows[1].error_m) << " m, p75 " << fixed(rows[2].error_m) << " m\n";
    return 0;
  }
};

// ---- matrix -----------------------------------------------------------------

struct Matrix {
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> experiments{"I", "II", "III", "IV"};
  std::vector<std::string> techniques;
  std::string strategy = "argmax";
  harness::SampleSizes sizes;
  std::size_t threads = 0;
  std::size_t fine_tune_epochs = 100;
  double fine_tune_rate = 0.005;
  bool copy_head = false;
  std::int64_t window = 2;
  ModelFlags flags;
  // recorded logs instead of synthetic scenarios
  std::vector<std::string> train_logs, calibration_logs, test_logs;
  std::vector<std::string> pairs;
  SiteFlags site;

  harness::ModelSettings settings() const {
    harness::ModelSettings m;
    m.hidden_layers = flags.hidden;
    m.learning_rate = flags.rate;
    m.batch_size = flags.batch;
    m.dropout_rate = flags.dropout;
    m.epochs = flags.epochs;
    m.standardize_inputs = !flags.no_standardize;
    m.fine_tune_epochs = fine_tune_epochs;
    m.fine_tune_rate = fine_tune_rate;
    m.copy_master_head = copy_head;
    return m;
  }

  std::vector<harness::Technique> parsed_techniques() const {
    std::vector<harness::Technique> t;
    for (const auto& n : techniques) t.push_back(harness::parse_technique(n));
    if (t.empty()) t.assign(harness::kAllTechniques.begin(), harness::kAllTechniques.end());
    return t;
  }

  std::vector<harness::ExperimentSpec> recorded_specs() const {
    std::vector<RssScan> train = load_all(train_logs), calib = load_all(calibration_logs),
                         test = load_all(test_logs);
    auto corpus = std::make_shared<harness::ScanCorpus>(
        harness::ScanCorpus{resolve_site(site, {&train, &calib, &test}), {}});
    for (auto& s : train) corpus->devices[s.device_id].train.push_back(std::move(s));
    for (auto& s : calib) corpus->devices[s.device_id].calibration.push_back(std::move(s));
    for (auto& s : test) corpus->devices[s.device_id].test.push_back(std::move(s));
    if (pairs.empty()) throw ArgumentError("recorded logs need at least one --pair MASTER:SLAVE");

    std::vector<harness::ExperimentSpec> specs;
    for (const auto& p : pairs) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw ArgumentError("--pair expects MASTER:SLAVE, got '" + p + "'");
      for (auto t : parsed_techniques()) {
        harness::ExperimentSpec s;
        s.name = p.substr(0, colon) + "_" + p.substr(colon + 1);
        s.source = std::shared_ptr<const harness::ScanCorpus>(corpus);
        s.master_device = p.substr(0, colon);
        s.slave_device = p.substr(colon + 1);
        s.technique = t;
        s.strategy = net::parse_decode_strategy(strategy);
        s.seed = seed;
        s.model = settings();
        s.pairing_window_s = window;
        specs.push_back(std::move(s));
      }
    }
    return specs;
  }

  int run() const {
    std::vector<harness::ExperimentSpec> specs;
    if (train_logs.empty() && test_logs.empty()) {
      harness::StandardMatrixOptions opt;
      opt.seed = seed;
      opt.experiments = experiments;
      opt.techniques = parsed_techniques();
      opt.sizes = sizes;
      opt.model = settings();
      opt.strategy = net::parse_decode_strategy(strategy);
      specs = harness::standard_matrix(opt);
    } else {
      specs = recorded_specs();
    }
    std::cout << "running " << specs.size() << " experiments\n";
    const auto result = harness::run_matrix(specs, threads);
    harness::write_matrix_outputs(result, out);

    for (const auto& row : result.rows) {
      std::cout << row.experiment << " " << harness::to_string(row.technique) << ": ";
      if (row.report) {
        std::cout << "p25 " << fixed(row.report->p25) << "  p50 " << fixed(row.report->p50) << "  p75 "
                  << fixed(row.report->p75) << " m\n";
      } else {
        std::cout << "FAILED: " << row.error << "\n";
      }
    }
    std::cout << "\nsummary\n";
    for (const auto& r : result.summary) {
      std::cout << r.experiment << " " << r.handling << " (" << harness::to_string(r.technique) << "): "
                << fixed(r.p25) << " / " << fixed(r.p50) << " / " << fixed(r.p75) << " m";
      if (r.change_pct) {
        std::cout << "  (" << fixed((*r.change_pct)[0]) << "% / " << fixed((*r.change_pct)[1]) << "% / "
                  << fixed((*r.change_pct)[2]) << "%)";
      }
      std::cout << "\n";
    }
    std::cout << "outputs in " << out << "\n";
    return result.ok() ? 0 : 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-heterogeneous RSS fingerprinting: worlds, training, adaptation, evaluation"};
  app.require_subcommand(1);
  int status = 0;

  GenWorld gw;
  auto* genworld = app.add_subcommand("genworld", "Generate a synthetic tower layout");
  genworld->add_option("--out", gw.out, "Output directory")->required();
  genworld->add_option("--seed", gw.seed, "World seed")->capture_default_str();
  genworld->add_option("--scenario", gw.scenario, "Base layout")
      ->check(CLI::IsMember({"urban", "rural"}))
      ->capture_default_str();
  genworld->add_option("--towers", gw.towers, "Number of towers");
  genworld->add_option("--width", gw.width, "Area width (m)");
  genworld->add_option("--height", gw.height, "Area height (m)");
  genworld->add_option("--cell-size", gw.cell_size, "Grid cell size (m)");
  genworld->add_option("--sigma", gw.sigma, "Shadowing std-dev (dB)");
  genworld->add_option("--floor", gw.floor, "Hearability floor (dBm)");
  genworld->callback([&] { status = gw.run(); });

  GenData gd;
  auto* gendata = app.add_subcommand("gendata", "Drive-test scans for one device in a world");
  gendata->add_option("--out", gd.out, "Output directory")->required();
  gendata->add_option("--world", gd.world, "World JSON")->required()->check(CLI::ExistingFile);
  gendata->add_option("--device", gd.device.device_id, "Device id")->capture_default_str();
  gendata->add_option("--gain", gd.device.gain, "Multiplicative dBm distortion")->capture_default_str();
  gendata->add_option("--offset", gd.device.offset_db, "Additive dBm distortion")->capture_default_str();
  gendata->add_option("--jitter", gd.device.per_tower_jitter_db, "Per-tower offset std-dev (dB)")
      ->capture_default_str();
  gendata->add_option("--noise", gd.device.noise_sigma_db, "Per-reading noise std-dev (dB)")
      ->capture_default_str();
  gendata->add_option("--per-cell", gd.per_cell, "Scans per grid cell")->capture_default_str();
  gendata->add_option("--seed", gd.seed, "Drive seed; equal seeds give time-aligned drives")
      ->capture_default_str();
  gendata->add_option("--name", gd.name, "Log file stem (default: device id)");
  gendata->callback([&] { status = gd.run(); });

  Train tr;
  auto* train = app.add_subcommand("train", "Train a fingerprint classifier on scan logs");
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--log", tr.logs, "Training scan log(s)")->required()->check(CLI::ExistingFile);
  train->add_option("--mode", tr.mode, "Feature mode")
      ->check(CLI::IsMember({"raw", "ratio", "difference"}))
      ->capture_default_str();
  train->add_option("--seed", tr.seed, "Model seed")->capture_default_str();
  tr.site.attach(*train);
  tr.model.attach(*train);
  train->callback([&] { status = tr.run(); });

  Calibrate ca;
  auto* calibrate = app.add_subcommand("calibrate", "Fit a per-tower slave-to-master linear map");
  calibrate->add_option("--out", ca.out, "Output directory")->required();
  calibrate->add_option("--master", ca.master, "Master device log")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--slave", ca.slave, "Slave device log")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--model", ca.model, "Take the inventory from this model")->check(CLI::ExistingFile);
  calibrate->add_option("--window", ca.window, "Pairing window (s)")->capture_default_str();
  ca.site.attach(*calibrate);
  calibrate->callback([&] { status = ca.run(); });

  Adapt ad;
  auto* adaptc = app.add_subcommand("adapt", "Transfer fine-tuning or multitask training");
  adaptc->add_option("--out", ad.out, "Output directory")->required();
  adaptc->add_option("--technique", ad.technique, "Adaptation technique")
      ->check(CLI::IsMember({"transfer", "multitask"}))
      ->capture_default_str();
  adaptc->add_option("--seed", ad.seed, "Seed for new heads or the multitask model")->capture_default_str();
  adaptc->add_option("--model", ad.model, "Base model (transfer)")->check(CLI::ExistingFile);
  adaptc->add_option("--log", ad.log, "Slave fine-tuning log (transfer)")->check(CLI::ExistingFile);
  adaptc->add_option("--head", ad.head, "Target head (default: the log's device id)");
  adaptc->add_option("--base-head", ad.base_head, "Head the new one starts from")->capture_default_str();
  adaptc->add_option("--fine-tune-epochs", ad.fine_tune_epochs, "Fine-tuning epochs")->capture_default_str();
  adaptc->add_option("--fine-tune-rate", ad.fine_tune_rate, "Fine-tuning learning rate")
      ->capture_default_str();
  adaptc->add_flag("--copy-head", ad.copy_head, "Start the target head from the base head");
  adaptc->add_option("--device-log", ad.device_logs, "Per-device training log ID=PATH (multitask)")
      ->delimiter(',');
  ad.site.attach(*adaptc);
  ad.flags.attach(*adaptc);
  adaptc->callback([&] { status = ad.run(); });

  Evaluate ev;
  auto* evaluate = app.add_subcommand("evaluate", "Localization error of a model on a test log");
  evaluate->add_option("--out", ev.out, "Output directory")->required();
  evaluate->add_option("--model", ev.model, "Model JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--log", ev.log, "Test scan log")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--head", ev.head, "Output head (default: the log's device, else default)");
  evaluate->add_option("--calibration", ev.calibration, "Linear map applied to the test scans")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--strategy", ev.strategy, "Location decoding")
      ->check(CLI::IsMember({"argmax", "center_of_mass"}))
      ->capture_default_str();
  evaluate->add_option("--name", ev.name, "Experiment name in results.csv")->capture_default_str();
  evaluate->callback([&] { status = ev.run(); });

  Matrix mx;
  auto* matrix = app.add_subcommand("matrix", "Run the train-device x test-device x technique matrix");
  matrix->add_option("--out", mx.out, "Output directory")->required();
  matrix->add_option("--seed", mx.seed, "Experiment seed")->required();
  matrix->add_option("--experiments", mx.experiments, "Synthetic experiments (I, II, III, IV)")
      ->delimiter(',')
      ->capture_default_str();
  matrix->add_option("--techniques", mx.techniques, "Techniques (default: all six)")->delimiter(',');
  matrix->add_option("--strategy", mx.strategy, "Location decoding")
      ->check(CLI::IsMember({"argmax", "center_of_mass"}))
      ->capture_default_str();
  matrix->add_option("--train-per-cell", mx.sizes.train_per_cell, "Training scans per cell")
      ->capture_default_str();
  matrix->add_option("--calibration-per-cell", mx.sizes.calibration_per_cell,
                     "Calibration/fine-tuning scans per cell")
      ->capture_default_str();
  matrix->add_option("--test-per-cell", mx.sizes.test_per_cell, "Test scans per cell")->capture_default_str();
  matrix->add_option("--threads", mx.threads, "Worker threads (0: all cores)")->capture_default_str();
  matrix->add_option("--fine-tune-epochs", mx.fine_tune_epochs, "Transfer fine-tuning epochs")
      ->capture_default_str();
  matrix->add_option("--fine-tune-rate", mx.fine_tune_rate, "Transfer fine-tuning rate")
      ->capture_default_str();
  matrix->add_flag("--copy-head", mx.copy_head, "Transfer starts from the master head");
  matrix->add_option("--window", mx.window, "Calibration pairing window (s)")->capture_default_str();
  matrix->add_option("--train-log", mx.train_logs, "Recorded training logs")->check(CLI::ExistingFile);
  matrix->add_option("--calibration-log", mx.calibration_logs, "Recorded calibration logs")
      ->check(CLI::ExistingFile);
  matrix->add_option("--test-log", mx.test_logs, "Recorded test logs")->check(CLI::ExistingFile);
  matrix->add_option("--pair", mx.pairs, "MASTER:SLAVE device pair for recorded logs");
  mx.flags.attach(*matrix);
  mx.site.attach(*matrix);
  matrix->callback([&] { status = mx.run(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
