#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hetloc/domain.hpp"

namespace hetloc::features {

struct VectorizeStats {
  std::size_t unknown_towers = 0;
};

/// Fixed-length raw vector over the inventory; towers not heard are 0.
FeatureVector vectorize(const RssScan& scan, const TowerInventory& inventory);
FeatureVector vectorize(const RssScan& scan, const TowerInventory& inventory,
                        VectorizeStats& stats);

/// Number of unordered tower pairs, M(M-1)/2.
constexpr std::size_t pair_count(std::size_t towers) { return towers * (towers - 1) / 2; }

/// Flattened position of pair (i, j), i < j, in lexicographic pair order.
constexpr std::size_t pair_index(std::size_t i, std::size_t j, std::size_t towers) {
  return i * towers - i * (i + 1) / 2 + (j - i - 1);
}

/// r_ij = f_i / f_j on the stored dBm values, 0 when either tower is unheard.
FeatureVector power_ratio(const FeatureVector& x);
/// d_ij = f_i - f_j, 0 when either tower is unheard.
FeatureVector power_difference(const FeatureVector& x);

/// Affine slave -> master map for one tower.
struct TowerFit {
  double slope = 1.0;
  double intercept = 0.0;
  std::size_t sample_count = 0;
  /// Set when there were too few co-heard pairs (or no spread) and the
  /// identity map was substituted.
  bool identity_fallback = true;
};

struct LinearMap {
  std::vector<TowerFit> towers;

  std::size_t size() const { return towers.size(); }
  static LinearMap identity(std::size_t towers);
};

/// Co-located, co-timed observations of the same scene by two devices.
struct CalibrationPair {
  FeatureVector master;
  FeatureVector slave;
};

/// Per-tower ordinary least squares slave -> master over co-heard entries.
/// Towers with fewer than two usable pairs, or with constant slave readings,
/// keep the identity map. Throws ArgumentError on an empty list or on
/// vectors of inconsistent length.
LinearMap fit_linear_map(std::span<const CalibrationPair> pairs);

/// Maps heard entries of a slave vector into the master's space. Unheard
/// entries stay exactly 0.
FeatureVector apply_linear_map(const LinearMap& map, const FeatureVector& slave);

/// Matches every slave scan to the master scan nearest in time, keeping
/// matches within `window_s` seconds. Returns (master index, slave index).
std::vector<std::pair<std::size_t, std::size_t>> pair_by_timestamp(
    std::span<const RssScan> master, std::span<const RssScan> slave, std::int64_t window_s = 2);

/// Vectorizes timestamp-matched scans into calibration pairs.
std::vector<CalibrationPair> calibration_pairs(std::span<const RssScan> master,
                                               std::span<const RssScan> slave,
                                               const TowerInventory& inventory,
                                               std::int64_t window_s = 2);

}  // namespace hetloc::features
