#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "hetloc/domain.hpp"
#include "hetloc/netcore.hpp"

namespace hetloc::testing {

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool bitwise_equal(const net::DenseLayer& a, const net::DenseLayer& b) {
  return a.inputs == b.inputs && a.outputs == b.outputs && bitwise_equal(a.weights, b.weights) &&
         bitwise_equal(a.bias, b.bias);
}

inline bool same_trunk(const net::MlpModel& a, const net::MlpModel& b) {
  if (a.trunk.size() != b.trunk.size()) return false;
  for (std::size_t l = 0; l < a.trunk.size(); ++l) {
    if (!bitwise_equal(a.trunk[l], b.trunk[l])) return false;
  }
  return true;
}

inline TowerInventory abc() { return TowerInventory({"A", "B", "C"}); }

inline FeatureVector raw(std::vector<double> v) { return {std::move(v), FeatureMode::raw}; }

}  // namespace hetloc::testing
