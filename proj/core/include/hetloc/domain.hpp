#pragma once

// Core value types shared by every module: scans, the tower inventory,
// grid geometry and labelled datasets. All of them are immutable once built.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetloc {

/// Maximum number of towers a handset reports in one scan.
inline constexpr std::size_t kMaxHeardTowers = 7;
/// Plausible RSS range for generated data; ingested data outside it is warned about.
inline constexpr double kMinRssDbm = -120.0;
inline constexpr double kMaxRssDbm = -30.0;

/// Local planar position in meters.
struct Point {
  double x{};
  double y{};

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

/// Sorted, de-duplicated set of cell-tower identifiers. The position of an id
/// in this list is its feature index, so the assignment is a pure function of
/// the set of ids.
class TowerInventory {
 public:
  /// Sorts and de-duplicates `ids`. Throws ConfigError when fewer than two
  /// distinct towers remain.
  explicit TowerInventory(std::vector<std::string> ids);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  std::optional<std::size_t> index_of(std::string_view id) const;

  friend bool operator==(const TowerInventory&, const TowerInventory&) = default;

 private:
  std::vector<std::string> ids_;
};

/// Row-major partition of a rectangle into equally sized square cells. The
/// center of each cell is one reference location.
class Grid {
 public:
  Grid(Point origin, double cell_size, std::size_t cols, std::size_t rows);

  Point origin() const { return origin_; }
  double cell_size() const { return cell_size_; }
  std::size_t cols() const { return cols_; }
  std::size_t rows() const { return rows_; }
  std::size_t cell_count() const { return cols_ * rows_; }
  double width() const { return cell_size_ * static_cast<double>(cols_); }
  double height() const { return cell_size_ * static_cast<double>(rows_); }

  /// Containing cell with floor semantics; positions outside the box clamp to
  /// the nearest border cell, so this is total.
  std::size_t cell_of(Point p) const;

  /// Throws ArgumentError for an index outside [0, K).
  Point cell_center(std::size_t cell) const;

  bool contains(Point p) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Point origin_;
  double cell_size_;
  std::size_t cols_;
  std::size_t rows_;
};

/// Smallest grid anchored at `origin` covering a width x height rectangle.
Grid grid_covering(Point origin, double width, double height, double cell_size);

struct Reading {
  std::string tower_id;
  double rss_dbm{};

  friend bool operator==(const Reading&, const Reading&) = default;
};

/// One timestamped observation from one device.
struct RssScan {
  std::string device_id;
  std::int64_t timestamp{};
  Point position;
  std::vector<Reading> readings;

  friend bool operator==(const RssScan&, const RssScan&) = default;
};

/// Structural problem with a scan (reading count, duplicate towers), or
/// nullopt when the scan is well-formed. RSS range is not checked here.
std::optional<std::string> scan_problem(const RssScan& scan);

/// Tower inventory and grid: everything needed to turn scans into labelled
/// feature vectors and class indices back into positions.
struct Site {
  TowerInventory inventory;
  Grid grid;

  friend bool operator==(const Site&, const Site&) = default;
};

enum class FeatureMode { raw, calibrated, ratio, difference };

std::string_view to_string(FeatureMode mode);
/// Throws ArgumentError for an unknown name.
FeatureMode parse_feature_mode(std::string_view name);
bool is_pairwise(FeatureMode mode);
/// Raw and calibrated vectors live in the same feature space.
bool same_feature_space(FeatureMode a, FeatureMode b);

struct FeatureVector {
  std::vector<double> values;
  FeatureMode mode = FeatureMode::raw;
};

struct Sample {
  std::vector<double> features;
  std::size_t label{};
  std::string device_id;
  Point position;
};

/// Labelled samples over one site, all in one feature mode.
struct Dataset {
  TowerInventory inventory;
  Grid grid;
  FeatureMode mode = FeatureMode::raw;
  std::vector<Sample> samples;
  /// Readings from towers missing from the inventory, dropped during vectorization.
  std::size_t dropped_readings = 0;

  /// Feature width implied by the mode: M or M(M-1)/2.
  std::size_t feature_width() const;
  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Throws ConfigError when a sample has the wrong width or a label >= K.
  void validate() const;
};

}  // namespace hetloc
