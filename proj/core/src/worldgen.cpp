#include "hetloc/worldgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "hetloc/errors.hpp"
#include "hetloc/features.hpp"
#include "hetloc/random.hpp"

namespace hetloc::worldgen {

void WorldConfig::validate() const {
  if (tower_count < 2) throw ConfigError("world needs at least 2 towers");
  if (!(width_m > 0.0) || !(height_m > 0.0)) throw ConfigError("world area must be positive");
  if (!(cell_size_m > 0.0)) throw ConfigError("cell size must be positive");
  if (!(shadowing_sigma_db >= 0.0)) throw ConfigError("shadowing sigma must be non-negative");
  if (max_heard != kMaxHeardTowers) throw ConfigError("max_heard is fixed at 7");
}

void DeviceProfile::validate() const {
  if (device_id.empty()) throw ConfigError("device profile needs an id");
  if (!(gain > 0.0)) throw ConfigError("device gain must be positive");
  if (!(per_tower_jitter_db >= 0.0) || !(noise_sigma_db >= 0.0)) {
    throw ConfigError("device jitter and noise must be non-negative");
  }
}

namespace {

std::string tower_id(std::size_t index, std::size_t count) {
  const int digits = count <= 100 ? 2 : (count <= 1000 ? 3 : 6);
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%0*zu", digits, index);
  return buf;
}

std::vector<std::string> ids_of(const std::vector<Tower>& towers) {
  std::vector<std::string> ids;
  for (const auto& t : towers) ids.push_back(t.id);
  return ids;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t value) { return derive_seed(seed, value); }

std::uint64_t position_key(std::uint64_t seed, std::int64_t timestamp, Point p) {
  std::uint64_t k = mix(seed, static_cast<std::uint64_t>(timestamp));
  k = mix(k, std::bit_cast<std::uint64_t>(p.x));
  return mix(k, std::bit_cast<std::uint64_t>(p.y));
}

}  // namespace

World generate_world(const WorldConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "towers"));
  std::uniform_real_distribution<double> ux(0.0, config.width_m);
  std::uniform_real_distribution<double> uy(0.0, config.height_m);
  std::vector<Tower> towers;
  for (std::size_t i = 0; i < config.tower_count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    towers.push_back({tower_id(i, config.tower_count), {x, y}});
  }
  std::sort(towers.begin(), towers.end(), [](const Tower& a, const Tower& b) { return a.id < b.id; });
  Grid grid = grid_covering({0.0, 0.0}, config.width_m, config.height_m, config.cell_size_m);
  TowerInventory inventory(ids_of(towers));
  return World{config, std::move(towers), Site{std::move(inventory), grid}};
}

double path_loss_rss(const WorldConfig& config, double distance_m) {
  return config.tx_power_dbm -
         10.0 * config.path_loss_exponent * std::log10(std::max(distance_m, 1.0));
}

RssScan sample_scan(const World& world, const DeviceProfile& profile, Point position,
                    std::int64_t timestamp) {
  const WorldConfig& cfg = world.config;
  if (!(position.x >= 0.0 && position.x <= cfg.width_m && position.y >= 0.0 &&
        position.y <= cfg.height_m)) {
    throw ArgumentError("sample_scan: position outside the world area");
  }
  const std::size_t m = world.towers.size();
  const std::uint64_t device_key = fnv1a(profile.device_id);

  Rng channel(position_key(cfg.seed, timestamp, position));
  Rng device_noise(mix(position_key(cfg.seed, timestamp, position), device_key));
  Rng device_bias(mix(derive_seed(cfg.seed, "jitter"), device_key));
  // One distribution per engine: normal_distribution caches its second draw.
  std::normal_distribution<double> shadow_draw, noise_draw, jitter_draw;

  struct Candidate {
    std::size_t tower;
    double rss;
  };
  std::vector<Candidate> candidates(m);
  for (std::size_t t = 0; t < m; ++t) {
    const double shadow = shadow_draw(channel);
    const double noise = noise_draw(device_noise);
    const double jitter = jitter_draw(device_bias);
    const double ideal = path_loss_rss(cfg, distance(position, world.towers[t].position)) +
                         cfg.shadowing_sigma_db * shadow;
    const double device = profile.gain * ideal + profile.per_tower_jitter_db * jitter +
                          profile.noise_sigma_db * noise;
    candidates[t] = {t, device + profile.offset_db};
  }
  // Strongest first; tower index breaks ties.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.rss > b.rss; });

  RssScan scan{profile.device_id, timestamp, position, {}};
  for (const auto& c : candidates) {
    if (scan.readings.size() == cfg.max_heard) break;
    if (c.rss < cfg.hearability_floor_dbm && !scan.readings.empty()) break;
    scan.readings.push_back({world.towers[c.tower].id, c.rss});
  }
  return scan;
}

std::vector<RssScan> generate_scans(const World& world, const DeviceProfile& profile,
                                    std::size_t samples_per_cell, std::uint64_t seed) {
  profile.validate();
  if (samples_per_cell == 0) throw ArgumentError("samples_per_cell must be at least 1");
  const Grid& grid = world.site.grid;
  const WorldConfig& cfg = world.config;
  Rng rng(derive_seed(mix(cfg.seed, seed), "positions"));

  std::vector<Point> positions;
  positions.reserve(grid.cell_count() * samples_per_cell);
  for (std::size_t cell = 0; cell < grid.cell_count(); ++cell) {
    const Point c = grid.cell_center(cell);
    const double half = grid.cell_size() / 2.0;
    // Cells on the far border may stick out of the area.
    const double x0 = c.x - half, x1 = std::min(c.x + half, cfg.width_m);
    const double y0 = c.y - half, y1 = std::min(c.y + half, cfg.height_m);
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
    for (std::size_t s = 0; s < samples_per_cell; ++s) {
      Point p{ux(rng), uy(rng)};
      // uniform_real_distribution is half-open, keep samples strictly inside the cell
      p.x = std::min(p.x, std::nextafter(x1, x0));
      p.y = std::min(p.y, std::nextafter(y1, y0));
      positions.push_back(p);
    }
  }
  std::shuffle(positions.begin(), positions.end(), rng);

  std::vector<RssScan> scans;
  scans.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    scans.push_back(sample_scan(world, profile, positions[i],
                                kFirstTimestamp + static_cast<std::int64_t>(i)));
  }
  return scans;
}

Dataset generate_dataset(const World& world, const DeviceProfile& profile,
                         std::size_t samples_per_cell, std::uint64_t seed) {
  const auto scans = generate_scans(world, profile, samples_per_cell, seed);
  Dataset data{world.site.inventory, world.site.grid, FeatureMode::raw, {}, 0};
  data.samples.reserve(scans.size());
  features::VectorizeStats stats;
  for (const auto& scan : scans) {
    auto fv = features::vectorize(scan, data.inventory, stats);
    data.samples.push_back(
        {std::move(fv.values), data.grid.cell_of(scan.position), scan.device_id, scan.position});
  }
  data.dropped_readings = stats.unknown_towers;
  return data;
}

}  // namespace hetloc::worldgen
