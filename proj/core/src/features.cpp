#include "hetloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetloc/errors.hpp"

namespace hetloc::features {

FeatureVector vectorize(const RssScan& scan, const TowerInventory& inventory) {
  VectorizeStats stats;
  return vectorize(scan, inventory, stats);
}

FeatureVector vectorize(const RssScan& scan, const TowerInventory& inventory,
                        VectorizeStats& stats) {
  FeatureVector out{std::vector<double>(inventory.size(), 0.0), FeatureMode::raw};
  for (const auto& reading : scan.readings) {
    if (auto k = inventory.index_of(reading.tower_id)) {
      out.values[*k] = reading.rss_dbm;
    } else {
      ++stats.unknown_towers;
    }
  }
  return out;
}

namespace {

void require_tower_space(const FeatureVector& x, const char* op) {
  if (is_pairwise(x.mode)) {
    throw ArgumentError(std::string(op) + " needs a raw or calibrated vector, got " +
                        std::string(to_string(x.mode)));
  }
  if (x.values.size() < 2) {
    throw ArgumentError(std::string(op) + " needs at least 2 towers");
  }
}

template <typename Op>
FeatureVector pairwise(const FeatureVector& x, FeatureMode mode, Op op) {
  const std::size_t m = x.values.size();
  FeatureVector out{std::vector<double>(pair_count(m), 0.0), mode};
  std::size_t k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double fi = x.values[i];
    for (std::size_t j = i + 1; j < m; ++j, ++k) {
      const double fj = x.values[j];
      if (fi != 0.0 && fj != 0.0) out.values[k] = op(fi, fj);
    }
  }
  return out;
}

}  // namespace

FeatureVector power_ratio(const FeatureVector& x) {
  require_tower_space(x, "power_ratio");
  return pairwise(x, FeatureMode::ratio, [](double a, double b) { return a / b; });
}

FeatureVector power_difference(const FeatureVector& x) {
  require_tower_space(x, "power_difference");
  return pairwise(x, FeatureMode::difference, [](double a, double b) { return a - b; });
}

LinearMap LinearMap::identity(std::size_t towers) {
  return LinearMap{std::vector<TowerFit>(towers)};
}

LinearMap fit_linear_map(std::span<const CalibrationPair> pairs) {
  if (pairs.empty()) throw ArgumentError("fit_linear_map: no calibration pairs");
  const std::size_t m = pairs.front().master.values.size();
  for (const auto& p : pairs) {
    if (p.master.values.size() != m || p.slave.values.size() != m) {
      throw ArgumentError("fit_linear_map: calibration vectors differ in length");
    }
  }

  LinearMap map = LinearMap::identity(m);
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t < m; ++t) {
    xs.clear();
    ys.clear();
    for (const auto& p : pairs) {
      const double s = p.slave.values[t];
      const double ms = p.master.values[t];
      if (s != 0.0 && ms != 0.0) {
        xs.push_back(s);
        ys.push_back(ms);
      }
    }
    TowerFit& fit = map.towers[t];
    fit.sample_count = xs.size();
    if (xs.size() < 2) continue;

    const double n = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mean_x += xs[i];
      mean_y += ys[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double dx = xs[i] - mean_x;
      sxx += dx * dx;
      sxy += dx * (ys[i] - mean_y);
    }
    // Constant slave readings leave the slope undetermined.
    if (sxx <= 1e-12 * n * std::max(1.0, mean_x * mean_x)) continue;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    fit.identity_fallback = false;
  }
  return map;
}

FeatureVector apply_linear_map(const LinearMap& map, const FeatureVector& slave) {
  if (is_pairwise(slave.mode)) {
    throw ArgumentError("apply_linear_map needs a raw vector");
  }
  if (slave.values.size() != map.size()) {
    throw ArgumentError("apply_linear_map: vector has " + std::to_string(slave.values.size()) +
                        " towers, map has " + std::to_string(map.size()));
  }
  FeatureVector out{slave.values, FeatureMode::calibrated};
  for (std::size_t t = 0; t < out.values.size(); ++t) {
    double& v = out.values[t];
    if (v != 0.0) v = map.towers[t].slope * v + map.towers[t].intercept;
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> pair_by_timestamp(
    std::span<const RssScan> master, std::span<const RssScan> slave, std::int64_t window_s) {
  if (window_s < 0) throw ArgumentError("pairing window must be non-negative");
  std::vector<std::size_t> order(master.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return master[a].timestamp < master[b].timestamp;
  });

  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(slave.size());
  for (std::size_t s = 0; s < slave.size(); ++s) {
    const std::int64_t t = slave[s].timestamp;
    auto it = std::lower_bound(order.begin(), order.end(), t, [&](std::size_t idx, std::int64_t v) {
      return master[idx].timestamp < v;
    });
    std::size_t best = master.size();
    std::int64_t best_gap = window_s + 1;
    // Ties prefer the earlier master scan.
    if (it != order.begin()) {
      const std::size_t cand = *std::prev(it);
      best_gap = t - master[cand].timestamp;
      best = cand;
    }
    if (it != order.end()) {
      const std::int64_t gap = master[*it].timestamp - t;
      if (gap < best_gap) {
        best_gap = gap;
        best = *it;
      }
    }
    if (best < master.size() && best_gap <= window_s) out.emplace_back(best, s);
  }
  return out;
}

std::vector<CalibrationPair> calibration_pairs(std::span<const RssScan> master,
                                               std::span<const RssScan> slave,
                                               const TowerInventory& inventory,
                                               std::int64_t window_s) {
  std::vector<CalibrationPair> pairs;
  for (auto [mi, si] : pair_by_timestamp(master, slave, window_s)) {
    pairs.push_back({vectorize(master[mi], inventory), vectorize(slave[si], inventory)});
  }
  return pairs;
}

}  // namespace hetloc::features
