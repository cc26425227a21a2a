#include "hetloc/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hetloc/errors.hpp"

namespace hetloc {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

TowerInventory::TowerInventory(std::vector<std::string> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  if (ids_.size() < 2) {
    throw ConfigError("tower inventory needs at least 2 distinct towers, got " +
                      std::to_string(ids_.size()));
  }
}

std::optional<std::size_t> TowerInventory::index_of(std::string_view id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

Grid::Grid(Point origin, double cell_size, std::size_t cols, std::size_t rows)
    : origin_(origin), cell_size_(cell_size), cols_(cols), rows_(rows) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw ConfigError("grid cell size must be positive and finite");
  }
  if (cols == 0 || rows == 0) throw ConfigError("grid needs at least one row and column");
}

namespace {

std::size_t clamped_index(double offset, double cell_size, std::size_t count) {
  const double f = std::floor(offset / cell_size);
  if (!(f > 0.0)) return 0;  // also catches NaN
  if (f >= static_cast<double>(count)) return count - 1;
  return static_cast<std::size_t>(f);
}

}  // namespace

std::size_t Grid::cell_of(Point p) const {
  const std::size_t col = clamped_index(p.x - origin_.x, cell_size_, cols_);
  const std::size_t row = clamped_index(p.y - origin_.y, cell_size_, rows_);
  return row * cols_ + col;
}

Point Grid::cell_center(std::size_t cell) const {
  if (cell >= cell_count()) {
    throw ArgumentError("cell index " + std::to_string(cell) + " outside grid of " +
                        std::to_string(cell_count()) + " cells");
  }
  const auto col = static_cast<double>(cell % cols_);
  const auto row = static_cast<double>(cell / cols_);
  return {origin_.x + (col + 0.5) * cell_size_, origin_.y + (row + 0.5) * cell_size_};
}

bool Grid::contains(Point p) const {
  return p.x >= origin_.x && p.x <= origin_.x + width() && p.y >= origin_.y &&
         p.y <= origin_.y + height();
}

Grid grid_covering(Point origin, double width, double height, double cell_size) {
  if (!(cell_size > 0.0)) throw ConfigError("grid cell size must be positive");
  if (width < 0.0 || height < 0.0) throw ConfigError("grid extent must be non-negative");
  auto cells = [&](double extent) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent / cell_size - 1e-9)));
  };
  return Grid(origin, cell_size, cells(width), cells(height));
}

std::optional<std::string> scan_problem(const RssScan& scan) {
  if (scan.readings.empty()) return "scan has no tower readings";
  if (scan.readings.size() > kMaxHeardTowers) {
    return "exceeds " + std::to_string(kMaxHeardTowers) + " towers";
  }
  std::set<std::string_view> seen;
  for (const auto& r : scan.readings) {
    if (r.tower_id.empty()) return "empty tower id";
    if (!seen.insert(r.tower_id).second) return "duplicate tower " + r.tower_id;
    if (!std::isfinite(r.rss_dbm)) return "non-finite RSS for tower " + r.tower_id;
  }
  return std::nullopt;
}

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::raw: return "raw";
    case FeatureMode::calibrated: return "calibrated";
    case FeatureMode::ratio: return "ratio";
    case FeatureMode::difference: return "difference";
  }
  return "raw";
}

FeatureMode parse_feature_mode(std::string_view name) {
  if (name == "raw") return FeatureMode::raw;
  if (name == "calibrated") return FeatureMode::calibrated;
  if (name == "ratio") return FeatureMode::ratio;
  if (name == "difference") return FeatureMode::difference;
  throw ArgumentError("unknown feature mode '" + std::string(name) + "'");
}

bool is_pairwise(FeatureMode mode) {
  return mode == FeatureMode::ratio || mode == FeatureMode::difference;
}

bool same_feature_space(FeatureMode a, FeatureMode b) {
  if (is_pairwise(a) || is_pairwise(b)) return a == b;
  return true;
}

std::size_t Dataset::feature_width() const {
  const std::size_t m = inventory.size();
  return is_pairwise(mode) ? m * (m - 1) / 2 : m;
}

void Dataset::validate() const {
  const std::size_t width = feature_width();
  const std::size_t k = grid.cell_count();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != width) {
      throw ConfigError("sample " + std::to_string(i) + " has " +
                        std::to_string(samples[i].features.size()) + " features, expected " +
                        std::to_string(width));
    }
    if (samples[i].label >= k) {
      throw ConfigError("sample " + std::to_string(i) + " label " +
                        std::to_string(samples[i].label) + " outside [0, " + std::to_string(k) +
                        ")");
    }
  }
}

}  // namespace hetloc
