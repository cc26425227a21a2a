#pragma once

// Deep heterogeneity handling: transfer learning (frozen trunk, retrained
// softmax head on a few slave samples) and multitask learning (one shared
// trunk, one head per device, trained together).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "hetloc/domain.hpp"
#include "hetloc/netcore.hpp"

namespace hetloc::adapt {

struct TransferPlan {
  std::size_t fine_tune_epochs = 100;
  double fine_tune_rate = 0.005;
  /// Head of the base model the new head replaces or sits beside.
  std::string base_head = std::string(net::kDefaultHead);
  /// Head that receives the fine-tuned weights; may equal `base_head`.
  std::string target_head = std::string(net::kDefaultHead);
  /// Start from a copy of the base head instead of fresh seeded weights.
  bool copy_base_head = false;
  std::uint64_t seed = 0;
};

/// Returns a copy of `base` whose trunk is bitwise unchanged and whose
/// `plan.target_head` was trained on `slave_data` with dropout off. With zero
/// epochs the base model is returned untouched. Throws ArgumentError for
/// empty slave data or a feature mode the base model was not trained on.
net::MlpModel transfer_fine_tune(const net::MlpModel& base, const Dataset& slave_data,
                                 const TransferPlan& plan = {});

/// Device id -> training data. Iteration order (sorted ids) is the rotation order.
struct MultitaskPlan {
  std::map<std::string, std::reference_wrapper<const Dataset>, std::less<>> devices;
};

/// Trains a shared trunk with one head per device by round-robin mini-batches.
/// Every head starts from the same seeded weights. An epoch ends once each
/// device's data has been consumed at least once; shorter datasets are
/// reshuffled and recycled meanwhile. Throws ArgumentError for no devices or
/// an empty dataset, ConfigError when grids, inventories or modes differ.
net::MlpModel multitask_train(const MultitaskPlan& plan, const net::MlpConfig& config);

/// Forward through the shared trunk and the device's head. Throws
/// LookupError listing the registered heads for an unknown device.
std::vector<double> predict_for_device(const net::MlpModel& model, std::string_view device_id,
                                       std::span<const double> x);

}  // namespace hetloc::adapt
