#pragma once

// Synthetic cellular drive-test generator: towers in a rectangle, log-distance
// path loss with log-normal shadowing, affine per-device distortion and
// coverage-limited scans of at most seven towers.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hetloc/domain.hpp"

namespace hetloc::worldgen {

struct WorldConfig {
  double width_m = 500.0;
  double height_m = 400.0;
  double cell_size_m = 100.0;
  std::size_t tower_count = 25;
  /// Received power at the 1 m reference distance.
  double tx_power_dbm = -40.0;
  double path_loss_exponent = 3.0;
  double shadowing_sigma_db = 4.0;
  std::size_t max_heard = kMaxHeardTowers;
  double hearability_floor_dbm = -110.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on fewer than 2 towers, negative sigma, a non-positive
  /// extent or cell size, or max_heard other than 7.
  void validate() const;
};

/// Affine-in-dBm device distortion: reading = gain * ideal + offset + jitter + noise.
struct DeviceProfile {
  std::string device_id;
  double gain = 1.0;
  double offset_db = 0.0;
  /// Std-dev of a fixed per-tower offset, drawn once per (device, tower).
  double per_tower_jitter_db = 0.0;
  /// Std-dev of independent per-reading noise.
  double noise_sigma_db = 1.0;

  void validate() const;
};

struct Tower {
  std::string id;
  Point position;
};

struct World {
  WorldConfig config;
  std::vector<Tower> towers;  // sorted by id, aligned with site.inventory
  Site site;
};

/// Uniformly placed towers with ids T00, T01, ...; deterministic per seed.
World generate_world(const WorldConfig& config);

/// Noise-free received power from a tower, before shadowing.
double path_loss_rss(const WorldConfig& config, double distance_m);

/// One scan at `position`. Shadowing is a pure function of (world seed,
/// timestamp, position, tower), so devices observing the same place at the
/// same time share it; per-reading noise is additionally keyed by device id.
/// Throws ArgumentError for a position outside the area.
RssScan sample_scan(const World& world, const DeviceProfile& profile, Point position,
                    std::int64_t timestamp);

/// Drive-test timestamps start here and advance by one second per scan.
inline constexpr std::int64_t kFirstTimestamp = 1'700'000'000;

/// `samples_per_cell` uniform positions in every grid cell, shuffled, one scan
/// per second. Positions, order and timestamps depend only on (world, seed),
/// so two devices given the same seed are timestamp-aligned.
std::vector<RssScan> generate_scans(const World& world, const DeviceProfile& profile,
                                    std::size_t samples_per_cell, std::uint64_t seed);

/// Raw-mode dataset of generate_scans, labelled by the containing cell.
Dataset generate_dataset(const World& world, const DeviceProfile& profile,
                         std::size_t samples_per_cell, std::uint64_t seed);

}  // namespace hetloc::worldgen
