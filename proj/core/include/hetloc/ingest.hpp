#pragma once

// Scan-log parsing and writing, dataset assembly, and JSON/CSV persistence
// for models, calibration maps, synthetic worlds and evaluation results.
//
// Scan-log line (UTF-8, LF):
//   timestamp,device_id,x_or_lat,y_or_lon,CID:RSS[,CID:RSS...]
// with 1 to 7 tower fields and RSS a signed decimal in dBm.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetloc/domain.hpp"
#include "hetloc/features.hpp"
#include "hetloc/netcore.hpp"
#include "hetloc/worldgen.hpp"

namespace hetloc::ingest {

struct Diagnostic {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<RssScan> scans;
  /// Lines that were rejected.
  std::vector<Diagnostic> errors;
  /// Accepted lines with suspicious content (RSS outside [-120, -30] dBm).
  std::vector<Diagnostic> warnings;
};

/// Never aborts on a malformed line. Blank lines and lines starting with '#'
/// are skipped. Throws IoError when the stream goes bad.
ParseResult parse_scan_log(std::istream& in);
/// Throws IoError when the file cannot be opened.
ParseResult read_scan_log(const std::filesystem::path& path);

/// Positions are written in shortest round-trip form, RSS with one decimal.
void write_scan_log(std::ostream& out, std::span<const RssScan> scans);
void write_scan_log(const std::filesystem::path& path, std::span<const RssScan> scans);

/// Sorted set of every tower id appearing in `scans`.
TowerInventory derive_inventory(std::span<const RssScan> scans);

/// Grid anchored at the south-west corner of the scans' bounding box.
Grid derive_grid(std::span<const RssScan> scans, double cell_size);

/// Local equirectangular frame anchored at a reference latitude/longitude.
struct LocalProjection {
  double lat0_deg = 0.0;
  double lon0_deg = 0.0;

  Point to_local(double lat_deg, double lon_deg) const;
};

/// Anchors at the mean coordinate of the scans, whose positions hold (lat, lon).
LocalProjection fit_projection(std::span<const RssScan> scans);
/// Rewrites (lat, lon) positions into local meters.
void project_in_place(std::vector<RssScan>& scans, const LocalProjection& projection);

/// Vectorizes scans, applies `calibration` (before any pairwise transform),
/// then the pairwise transform `mode` asks for, and labels with cell_of.
/// Throws ArgumentError for no scans or a calibrated/pairwise target mode
/// mismatch, ConfigError when the calibration map does not cover the inventory.
Dataset build_dataset(std::span<const RssScan> scans, const TowerInventory& inventory,
                      const Grid& grid, FeatureMode mode,
                      const features::LinearMap* calibration = nullptr);

// ---- persistence ------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON holding config, scaler, layer shapes, row-major weights,
/// head registry and (optional) site. Doubles round-trip exactly.
std::string model_to_json(const net::MlpModel& model);
/// Throws IoError on malformed input or an unsupported version.
net::MlpModel model_from_json(const std::string& text);
void save_model(const net::MlpModel& model, const std::filesystem::path& path);
net::MlpModel load_model(const std::filesystem::path& path);

std::string linear_map_to_json(const features::LinearMap& map, const TowerInventory& inventory);
features::LinearMap linear_map_from_json(const std::string& text, const TowerInventory& inventory);

std::string world_to_json(const worldgen::World& world);
worldgen::World world_from_json(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// One row of `experiment,technique,percentile,error_m`.
struct ResultRow {
  std::string experiment;
  std::string technique;
  double percentile = 0.0;
  double error_m = 0.0;
};

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);

struct CdfPoint {
  double error_m = 0.0;
  double cumulative_fraction = 0.0;
};

/// `error_m,cumulative_fraction` rows.
void write_cdf_csv(std::ostream& out, std::span<const CdfPoint> cdf);

}  // namespace hetloc::ingest
