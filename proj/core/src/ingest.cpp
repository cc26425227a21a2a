#include "hetloc/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string_view>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "hetloc/errors.hpp"

namespace hetloc::ingest {

using Json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) return false;
  if constexpr (std::is_floating_point_v<T>) return std::isfinite(out);
  return true;
}

// Parses one non-blank line into `scan`; returns the rejection reason on failure.
std::optional<std::string> parse_line(std::string_view line, RssScan& scan) {
  const auto fields = split(line, ',');
  if (fields.size() < 5) {
    return "expected timestamp,device_id,x,y and at least one CID:RSS field, got " +
           std::to_string(fields.size()) + " fields";
  }
  const std::size_t towers = fields.size() - 4;
  if (towers > kMaxHeardTowers) {
    return "exceeds " + std::to_string(kMaxHeardTowers) + " towers (" + std::to_string(towers) + ")";
  }
  if (!parse_number(fields[0], scan.timestamp)) return "bad timestamp '" + std::string(fields[0]) + "'";
  if (fields[1].empty()) return "empty device id";
  scan.device_id = std::string(fields[1]);
  if (!parse_number(fields[2], scan.position.x) || !parse_number(fields[3], scan.position.y)) {
    return "bad coordinates '" + std::string(fields[2]) + "," + std::string(fields[3]) + "'";
  }
  scan.readings.clear();
  for (std::size_t i = 4; i < fields.size(); ++i) {
    const auto f = fields[i];
    const auto colon = f.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      return "tower field '" + std::string(f) + "' is not CID:RSS";
    }
    double rss = 0.0;
    if (!parse_number(trim(f.substr(colon + 1)), rss)) {
      return "bad RSS in tower field '" + std::string(f) + "'";
    }
    scan.readings.push_back({std::string(trim(f.substr(0, colon))), rss});
  }
  if (auto problem = scan_problem(scan)) return problem;
  return std::nullopt;
}

std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

ParseResult parse_scan_log(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    RssScan scan;
    if (auto reason = parse_line(view, scan)) {
      result.errors.push_back({number, std::move(*reason)});
      continue;
    }
    for (const auto& r : scan.readings) {
      if (r.rss_dbm < kMinRssDbm || r.rss_dbm > kMaxRssDbm) {
        result.warnings.push_back(
            {number, "RSS " + format_fixed(r.rss_dbm, 1) + " dBm for tower " + r.tower_id +
                         " outside [" + format_fixed(kMinRssDbm, 0) + ", " +
                         format_fixed(kMaxRssDbm, 0) + "]"});
      }
    }
    result.scans.push_back(std::move(scan));
  }
  if (in.bad()) throw IoError("scan log stream failed after line " + std::to_string(number));
  return result;
}

ParseResult read_scan_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scan log " + path.string());
  return parse_scan_log(in);
}

void write_scan_log(std::ostream& out, std::span<const RssScan> scans) {
  for (const auto& s : scans) {
    out << s.timestamp << ',' << s.device_id << ',' << format_shortest(s.position.x) << ','
        << format_shortest(s.position.y);
    for (const auto& r : s.readings) out << ',' << r.tower_id << ':' << format_fixed(r.rss_dbm, 1);
    out << '\n';
  }
  if (!out) throw IoError("failed writing scan log");
}

void write_scan_log(const std::filesystem::path& path, std::span<const RssScan> scans) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create scan log " + path.string());
  write_scan_log(out, scans);
}

TowerInventory derive_inventory(std::span<const RssScan> scans) {
  std::set<std::string> ids;
  for (const auto& s : scans) {
    for (const auto& r : s.readings) ids.insert(r.tower_id);
  }
  return TowerInventory(std::vector<std::string>(ids.begin(), ids.end()));
}

Grid derive_grid(std::span<const RssScan> scans, double cell_size) {
  if (scans.empty()) throw ArgumentError("derive_grid: no scans");
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& s : scans) {
    x0 = std::min(x0, s.position.x);
    y0 = std::min(y0, s.position.y);
    x1 = std::max(x1, s.position.x);
    y1 = std::max(y1, s.position.y);
  }
  return grid_covering({x0, y0}, x1 - x0, y1 - y0, cell_size);
}

namespace {
constexpr double kEarthRadiusM = 6'371'008.8;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}  // namespace

Point LocalProjection::to_local(double lat_deg, double lon_deg) const {
  const double x = (lon_deg - lon0_deg) * kDegToRad * kEarthRadiusM * std::cos(lat0_deg * kDegToRad);
  const double y = (lat_deg - lat0_deg) * kDegToRad * kEarthRadiusM;
  return {x, y};
}

LocalProjection fit_projection(std::span<const RssScan> scans) {
  if (scans.empty()) throw ArgumentError("fit_projection: no scans");
  double lat = 0.0, lon = 0.0;
  for (const auto& s : scans) {
    lat += s.position.x;
    lon += s.position.y;
  }
  const double n = static_cast<double>(scans.size());
  return {lat / n, lon / n};
}

void project_in_place(std::vector<RssScan>& scans, const LocalProjection& projection) {
  for (auto& s : scans) s.position = projection.to_local(s.position.x, s.position.y);
}

Dataset build_dataset(std::span<const RssScan> scans, const TowerInventory& inventory,
                      const Grid& grid, FeatureMode mode, const features::LinearMap* calibration) {
  if (scans.empty()) throw ArgumentError("build_dataset: no scans");
  if (mode == FeatureMode::calibrated && calibration == nullptr) {
    throw ArgumentError("build_dataset: calibrated mode needs a calibration map");
  }
  if (calibration != nullptr && calibration->size() != inventory.size()) {
    throw ConfigError("build_dataset: calibration map covers " +
                      std::to_string(calibration->size()) + " towers, inventory has " +
                      std::to_string(inventory.size()));
  }
  FeatureMode out_mode = mode;
  if (!is_pairwise(mode)) out_mode = calibration ? FeatureMode::calibrated : FeatureMode::raw;

  Dataset data{inventory, grid, out_mode, {}, 0};
  data.samples.reserve(scans.size());
  features::VectorizeStats stats;
  std::size_t total_readings = 0;
  for (const auto& scan : scans) {
    total_readings += scan.readings.size();
    FeatureVector fv = features::vectorize(scan, inventory, stats);
    if (calibration) fv = features::apply_linear_map(*calibration, fv);
    if (mode == FeatureMode::ratio) fv = features::power_ratio(fv);
    if (mode == FeatureMode::difference) fv = features::power_difference(fv);
    data.samples.push_back(
        {std::move(fv.values), grid.cell_of(scan.position), scan.device_id, scan.position});
  }
  if (total_readings > 0 && stats.unknown_towers == total_readings) {
    throw ConfigError("build_dataset: none of the scanned towers is in the inventory");
  }
  data.dropped_readings = stats.unknown_towers;
  return data;
}

// ---- persistence ------------------------------------------------------------

namespace {

Json layer_json(const net::DenseLayer& layer) {
  return Json{{"inputs", layer.inputs},
              {"outputs", layer.outputs},
              {"trainable", layer.trainable},
              {"weights", layer.weights},
              {"bias", layer.bias}};
}

net::DenseLayer layer_from(const Json& j) {
  net::DenseLayer layer;
  layer.inputs = j.at("inputs").get<std::size_t>();
  layer.outputs = j.at("outputs").get<std::size_t>();
  layer.trainable = j.at("trainable").get<bool>();
  layer.weights = j.at("weights").get<std::vector<double>>();
  layer.bias = j.at("bias").get<std::vector<double>>();
  if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
    throw IoError("layer arrays do not match their declared shape");
  }
  return layer;
}

Json grid_json(const Grid& g) {
  return Json{{"origin", {g.origin().x, g.origin().y}},
              {"cell_size", g.cell_size()},
              {"cols", g.cols()},
              {"rows", g.rows()}};
}

Grid grid_from(const Json& j) {
  const auto origin = j.at("origin").get<std::vector<double>>();
  if (origin.size() != 2) throw IoError("grid origin must have two coordinates");
  return Grid({origin[0], origin[1]}, j.at("cell_size").get<double>(),
              j.at("cols").get<std::size_t>(), j.at("rows").get<std::size_t>());
}

Json site_json(const Site& site) {
  return Json{{"towers", site.inventory.ids()}, {"grid", grid_json(site.grid)}};
}

Site site_from(const Json& j) {
  return Site{TowerInventory(j.at("towers").get<std::vector<std::string>>()), grid_from(j.at("grid"))};
}

void check_header(const Json& j, std::string_view format) {
  if (!j.is_object() || j.value("format", "") != format) {
    throw IoError("not a " + std::string(format) + " document");
  }
  if (j.value("version", 0) != kModelFormatVersion) {
    throw IoError("unsupported " + std::string(format) + " version " +
                  std::to_string(j.value("version", 0)));
  }
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed JSON: ") + e.what());
  }
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw IoError(std::string("invalid document: ") + e.what());
  }
}

}  // namespace

std::string model_to_json(const net::MlpModel& model) {
  const auto& c = model.config;
  Json j;
  j["format"] = "hetloc-mlp";
  j["version"] = kModelFormatVersion;
  j["config"] = Json{{"layer_sizes", c.layer_sizes},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"dropout_rate", c.dropout_rate},
                     {"epochs", c.epochs},
                     {"hidden_activation", "sigmoid"},
                     {"seed", c.seed},
                     {"shuffle", c.shuffle},
                     {"standardize_inputs", c.standardize_inputs}};
  j["feature_mode"] = std::string(to_string(model.feature_mode));
  j["scaler"] = Json{{"mean", model.scaler.mean}, {"scale", model.scaler.scale}};
  j["trunk"] = Json::array();
  for (const auto& layer : model.trunk) j["trunk"].push_back(layer_json(layer));
  j["heads"] = Json::object();
  for (const auto& [name, layer] : model.heads) j["heads"][name] = layer_json(layer);
  j["head_samples"] = Json::object();
  for (const auto& [name, n] : model.head_samples) j["head_samples"][name] = n;
  if (model.site) j["site"] = site_json(*model.site);
  return j.dump(1);
}

net::MlpModel model_from_json(const std::string& text) {
  const Json j = parse_json(text);
  check_header(j, "hetloc-mlp");
  return guarded([&] {
    net::MlpModel model;
    const Json& c = j.at("config");
    model.config.layer_sizes = c.at("layer_sizes").get<std::vector<std::size_t>>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.batch_size = c.at("batch_size").get<std::size_t>();
    model.config.dropout_rate = c.at("dropout_rate").get<double>();
    model.config.epochs = c.at("epochs").get<std::size_t>();
    if (c.value("hidden_activation", "sigmoid") != "sigmoid") {
      throw IoError("unsupported hidden activation");
    }
    model.config.seed = c.at("seed").get<std::uint64_t>();
    model.config.shuffle = c.value("shuffle", true);
    model.config.standardize_inputs = c.value("standardize_inputs", true);
    model.config.validate();
    model.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    model.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    model.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
    for (const auto& l : j.at("trunk")) model.trunk.push_back(layer_from(l));
    for (const auto& [name, l] : j.at("heads").items()) model.heads.emplace(name, layer_from(l));
    for (const auto& [name, n] : j.at("head_samples").items()) {
      model.head_samples.emplace(name, n.get<std::size_t>());
    }
    if (j.contains("site")) model.site = site_from(j.at("site"));

    if (model.trunk.empty() || model.heads.empty()) throw IoError("model has no layers or heads");
    for (std::size_t l = 1; l < model.trunk.size(); ++l) {
      if (model.trunk[l].inputs != model.trunk[l - 1].outputs) {
        throw IoError("trunk layer shapes do not chain");
      }
    }
    for (const auto& [name, head] : model.heads) {
      if (head.inputs != model.latent_width()) throw IoError("head '" + name + "' has wrong input width");
    }
    if (model.scaler.fitted() && (model.scaler.mean.size() != model.input_width() ||
                                  model.scaler.scale.size() != model.input_width())) {
      throw IoError("input scaler width does not match the model");
    }
    return model;
  });
}

void save_model(const net::MlpModel& model, const std::filesystem::path& path) {
  write_text(path, model_to_json(model));
}

net::MlpModel load_model(const std::filesystem::path& path) { return model_from_json(read_text(path)); }

std::string linear_map_to_json(const features::LinearMap& map, const TowerInventory& inventory) {
  if (map.size() != inventory.size()) {
    throw ConfigError("linear map and inventory differ in tower count");
  }
  Json j;
  j["format"] = "hetloc-linear-map";
  j["version"] = kModelFormatVersion;
  j["towers"] = Json::array();
  for (std::size_t t = 0; t < map.size(); ++t) {
    const auto& f = map.towers[t];
    j["towers"].push_back(Json{{"id", inventory.id(t)},
                               {"slope", f.slope},
                               {"intercept", f.intercept},
                               {"samples", f.sample_count},
                               {"identity_fallback", f.identity_fallback}});
  }
  return j.dump(1);
}

features::LinearMap linear_map_from_json(const std::string& text, const TowerInventory& inventory) {
  const Json j = parse_json(text);
  check_header(j, "hetloc-linear-map");
  return guarded([&] {
    auto map = features::LinearMap::identity(inventory.size());
    for (const auto& t : j.at("towers")) {
      const auto idx = inventory.index_of(t.at("id").get<std::string>());
      if (!idx) continue;
      auto& f = map.towers[*idx];
      f.slope = t.at("slope").get<double>();
      f.intercept = t.at("intercept").get<double>();
      f.sample_count = t.at("samples").get<std::size_t>();
      f.identity_fallback = t.at("identity_fallback").get<bool>();
    }
    return map;
  });
}

std::string world_to_json(const worldgen::World& world) {
  const auto& c = world.config;
  Json j;
  j["format"] = "hetloc-world";
  j["version"] = kModelFormatVersion;
  j["config"] = Json{{"width_m", c.width_m},
                     {"height_m", c.height_m},
                     {"cell_size_m", c.cell_size_m},
                     {"tower_count", c.tower_count},
                     {"tx_power_dbm", c.tx_power_dbm},
                     {"path_loss_exponent", c.path_loss_exponent},
                     {"shadowing_sigma_db", c.shadowing_sigma_db},
                     {"max_heard", c.max_heard},
                     {"hearability_floor_dbm", c.hearability_floor_dbm},
                     {"seed", c.seed}};
  j["towers"] = Json::array();
  for (const auto& t : world.towers) {
    j["towers"].push_back(Json{{"id", t.id}, {"x", t.position.x}, {"y", t.position.y}});
  }
  j["site"] = site_json(world.site);
  return j.dump(1);
}

worldgen::World world_from_json(const std::string& text) {
  const Json j = parse_json(text);
  check_header(j, "hetloc-world");
  return guarded([&] {
    const Json& c = j.at("config");
    worldgen::WorldConfig cfg;
    cfg.width_m = c.at("width_m").get<double>();
    cfg.height_m = c.at("height_m").get<double>();
    cfg.cell_size_m = c.at("cell_size_m").get<double>();
    cfg.tower_count = c.at("tower_count").get<std::size_t>();
    cfg.tx_power_dbm = c.at("tx_power_dbm").get<double>();
    cfg.path_loss_exponent = c.at("path_loss_exponent").get<double>();
    cfg.shadowing_sigma_db = c.at("shadowing_sigma_db").get<double>();
    cfg.max_heard = c.at("max_heard").get<std::size_t>();
    cfg.hearability_floor_dbm = c.at("hearability_floor_dbm").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.validate();
    std::vector<worldgen::Tower> towers;
    for (const auto& t : j.at("towers")) {
      towers.push_back({t.at("id").get<std::string>(), {t.at("x").get<double>(), t.at("y").get<double>()}});
    }
    Site site = site_from(j.at("site"));
    if (towers.size() != site.inventory.size()) throw IoError("world tower list and inventory differ");
    for (std::size_t i = 0; i < towers.size(); ++i) {
      if (towers[i].id != site.inventory.id(i)) throw IoError("world towers are not in inventory order");
    }
    return worldgen::World{cfg, std::move(towers), std::move(site)};
  });
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << "experiment,technique,percentile,error_m\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.technique << ',' << format_shortest(r.percentile) << ','
        << format_fixed(r.error_m, 3) << '\n';
  }
}

void write_cdf_csv(std::ostream& out, std::span<const CdfPoint> cdf) {
  out << "error_m,cumulative_fraction\n";
  for (const auto& p : cdf) {
    out << format_fixed(p.error_m, 3) << ',' << format_fixed(p.cumulative_fraction, 6) << '\n';
  }
}

}  // namespace hetloc::ingest
