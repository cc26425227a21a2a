#include "hetloc/adapt.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "hetloc/errors.hpp"

namespace hetloc::adapt {

net::MlpModel transfer_fine_tune(const net::MlpModel& base, const Dataset& slave_data,
                                 const TransferPlan& plan) {
  if (slave_data.empty()) throw ArgumentError("transfer_fine_tune: empty slave dataset");
  if (slave_data.feature_width() != base.input_width() ||
      !same_feature_space(base.feature_mode, slave_data.mode)) {
    throw ArgumentError("transfer_fine_tune: slave data is " +
                        std::string(to_string(slave_data.mode)) + " with " +
                        std::to_string(slave_data.feature_width()) +
                        " features, base model expects " +
                        std::string(to_string(base.feature_mode)) + " with " +
                        std::to_string(base.input_width()));
  }
  const net::DenseLayer& base_head = base.head(plan.base_head);
  if (base_head.outputs != slave_data.grid.cell_count()) {
    throw ArgumentError("transfer_fine_tune: base head has " + std::to_string(base_head.outputs) +
                        " classes, slave grid has " +
                        std::to_string(slave_data.grid.cell_count()));
  }
  if (plan.fine_tune_epochs == 0) return base;

  net::MlpModel model = base;
  net::set_trunk_trainable(model, false);
  if (plan.copy_base_head) {
    model.heads.insert_or_assign(plan.target_head, base_head);
  } else {
    net::add_head(model, plan.target_head, base_head.outputs, plan.seed);
  }
  model.head(plan.target_head).trainable = true;

  net::TrainOptions options;
  options.epochs = plan.fine_tune_epochs;
  options.learning_rate = plan.fine_tune_rate;
  options.dropout_rate = 0.0;
  net::train(model, slave_data, plan.target_head, options);
  return model;
}

namespace {

void check_compatible(const MultitaskPlan& plan, const net::MlpConfig& config) {
  if (plan.devices.empty()) throw ArgumentError("multitask_train: no devices");
  const Dataset& first = plan.devices.begin()->second.get();
  for (const auto& [id, ref] : plan.devices) {
    const Dataset& d = ref.get();
    if (d.empty()) throw ArgumentError("multitask_train: device '" + id + "' has no samples");
    if (!(d.grid == first.grid)) throw ConfigError("multitask_train: device '" + id + "' uses a different grid");
    if (!(d.inventory == first.inventory)) {
      throw ConfigError("multitask_train: device '" + id + "' uses a different tower inventory");
    }
    if (d.mode != first.mode) {
      throw ConfigError("multitask_train: device '" + id + "' has feature mode " +
                        std::string(to_string(d.mode)) + ", expected " +
                        std::string(to_string(first.mode)));
    }
  }
  if (config.input_width() != first.feature_width()) {
    throw ConfigError("multitask_train: config input width " + std::to_string(config.input_width()) +
                      " does not match feature width " + std::to_string(first.feature_width()));
  }
  if (config.output_width() != first.grid.cell_count()) {
    throw ConfigError("multitask_train: config output width " +
                      std::to_string(config.output_width()) + " does not match grid of " +
                      std::to_string(first.grid.cell_count()) + " cells");
  }
}

}  // namespace

net::MlpModel multitask_train(const MultitaskPlan& plan, const net::MlpConfig& config) {
  check_compatible(plan, config);
  net::MlpModel model = net::init_model(config);
  const net::DenseLayer initial_head = model.heads.begin()->second;
  model.heads.clear();
  std::vector<std::string> devices;
  std::vector<const Dataset*> datasets;
  for (const auto& [id, ref] : plan.devices) {
    devices.push_back(id);
    datasets.push_back(&ref.get());
    model.heads.emplace(id, initial_head);
  }
  model.feature_mode = datasets.front()->mode;
  if (config.standardize_inputs) net::fit_input_scaler(model, datasets);

  std::vector<net::PreparedData> prepared;
  for (const Dataset* d : datasets) prepared.push_back(net::prepare(model, *d));

  Rng rng = net::training_rng(config);
  const std::size_t count = devices.size();
  std::vector<std::vector<std::size_t>> order(count);
  for (std::size_t d = 0; d < count; ++d) {
    order[d].resize(prepared[d].rows);
    std::iota(order[d].begin(), order[d].end(), std::size_t{0});
  }
  const net::StepOptions step{config.learning_rate, config.dropout_rate};
  const std::size_t bs = config.batch_size;

  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::vector<std::size_t> cursor(count, 0);
    std::vector<bool> done(count, false);
    std::size_t remaining = count;
    if (config.shuffle) {
      for (auto& o : order) std::shuffle(o.begin(), o.end(), rng);
    }
    for (std::size_t d = 0; remaining > 0; d = (d + 1) % count) {
      auto& o = order[d];
      if (cursor[d] >= o.size()) {
        if (config.shuffle) std::shuffle(o.begin(), o.end(), rng);
        cursor[d] = 0;
      }
      const std::size_t n = std::min(bs, o.size() - cursor[d]);
      net::sgd_step(model, prepared[d], std::span<const std::size_t>(o.data() + cursor[d], n),
                    devices[d], step, rng);
      cursor[d] += n;
      if (cursor[d] >= o.size() && !done[d]) {
        done[d] = true;
        --remaining;
      }
    }
  }
  for (std::size_t d = 0; d < count; ++d) model.head_samples[devices[d]] = datasets[d]->size();
  return model;
}

std::vector<double> predict_for_device(const net::MlpModel& model, std::string_view device_id,
                                       std::span<const double> x) {
  return net::predict_proba(model, x, device_id);
}

}  // namespace hetloc::adapt
