#include "hetloc/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hetloc/errors.hpp"

namespace hetloc::net {

void MlpConfig::validate() const {
  if (layer_sizes.size() < 3) {
    throw ConfigError("an MLP needs an input width, at least one hidden layer and an output width");
  }
  for (std::size_t w : layer_sizes) {
    if (w == 0) throw ConfigError("layer widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
}

const DenseLayer& MlpModel::head(std::string_view name) const {
  auto it = heads.find(name);
  if (it == heads.end()) {
    std::string known;
    for (const auto& [k, _] : heads) known += (known.empty() ? "" : ", ") + k;
    throw LookupError("no output head '" + std::string(name) + "'; registered heads: " + known);
  }
  return it->second;
}

DenseLayer& MlpModel::head(std::string_view name) {
  return const_cast<DenseLayer&>(static_cast<const MlpModel&>(*this).head(name));
}

std::vector<std::string> MlpModel::head_names() const {
  std::vector<std::string> names;
  for (const auto& [k, _] : heads) names.push_back(k);
  return names;
}

DenseLayer init_layer(std::size_t inputs, std::size_t outputs, Rng& rng) {
  DenseLayer layer{inputs, outputs, std::vector<double>(inputs * outputs),
                   std::vector<double>(outputs, 0.0), true};
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : layer.weights) w = dist(rng);
  return layer;
}

MlpModel init_model(const MlpConfig& config) {
  config.validate();
  MlpModel model;
  model.config = config;
  Rng rng(derive_seed(config.seed, "init"));
  const auto& sizes = config.layer_sizes;
  for (std::size_t l = 0; l + 2 < sizes.size(); ++l) {
    model.trunk.push_back(init_layer(sizes[l], sizes[l + 1], rng));
  }
  model.heads.emplace(std::string(kDefaultHead),
                      init_layer(sizes[sizes.size() - 2], sizes.back(), rng));
  return model;
}

void add_head(MlpModel& model, std::string name, std::size_t classes, std::uint64_t seed) {
  if (classes == 0) throw ConfigError("a head needs at least one class");
  Rng rng(derive_seed(seed, name));
  model.heads.insert_or_assign(std::move(name), init_layer(model.latent_width(), classes, rng));
}

void set_trunk_trainable(MlpModel& model, bool trainable) {
  for (auto& layer : model.trunk) layer.trainable = trainable;
}

void fit_input_scaler(MlpModel& model, std::span<const Dataset* const> datasets) {
  const std::size_t width = model.input_width();
  std::vector<double> sum(width, 0.0), sum_sq(width, 0.0);
  double n = 0.0;
  for (const Dataset* data : datasets) {
    for (const auto& s : data->samples) {
      if (s.features.size() != width) {
        throw ArgumentError("fit_input_scaler: sample width " + std::to_string(s.features.size()) +
                            " differs from model input " + std::to_string(width));
      }
      for (std::size_t i = 0; i < width; ++i) sum[i] += s.features[i];
      n += 1.0;
    }
  }
  if (n == 0.0) throw ArgumentError("fit_input_scaler: no samples");
  InputScaler scaler{std::vector<double>(width), std::vector<double>(width)};
  for (std::size_t i = 0; i < width; ++i) scaler.mean[i] = sum[i] / n;
  for (const Dataset* data : datasets) {
    for (const auto& s : data->samples) {
      for (std::size_t i = 0; i < width; ++i) {
        const double d = s.features[i] - scaler.mean[i];
        sum_sq[i] += d * d;
      }
    }
  }
  for (std::size_t i = 0; i < width; ++i) {
    const double sd = std::sqrt(sum_sq[i] / n);
    scaler.scale[i] = sd > 1e-9 ? sd : 1.0;
  }
  model.scaler = std::move(scaler);
}

void fit_input_scaler(MlpModel& model, const Dataset& data) {
  const Dataset* one[] = {&data};
  fit_input_scaler(model, one);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void standardize(const InputScaler& scaler, std::span<const double> x, double* out) {
  if (!scaler.fitted()) {
    std::copy(x.begin(), x.end(), out);
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - scaler.mean[i]) / scaler.scale[i];
}

// out (batch x outputs) = in (batch x inputs) * W + b
void affine(const DenseLayer& layer, const double* in, std::size_t batch, double* out) {
  const std::size_t ni = layer.inputs, no = layer.outputs;
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = out + b * no;
    std::copy(layer.bias.begin(), layer.bias.end(), row);
    const double* a = in + b * ni;
    for (std::size_t i = 0; i < ni; ++i) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      const double* w = layer.weights.data() + i * no;
      for (std::size_t o = 0; o < no; ++o) row[o] += ai * w[o];
    }
  }
}

void softmax_rows(double* z, std::size_t batch, std::size_t width) {
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = z + b * width;
    const double mx = *std::max_element(row, row + width);
    double sum = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      row[k] = std::exp(row[k] - mx);
      sum += row[k];
    }
    for (std::size_t k = 0; k < width; ++k) row[k] /= sum;
  }
}

struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

// Buffers for one mini-batch; reused across steps.
struct Workspace {
  std::size_t batch = 0;
  std::vector<std::vector<double>> inputs;  // inputs[l]: input to trunk layer l; [L] feeds the head
  std::vector<std::vector<double>> sig;     // sigmoid output of trunk layer l
  std::vector<std::vector<double>> mask;    // dropout scale of trunk layer l (empty = none)
  std::vector<double> probs;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  std::vector<Gradient> trunk_grad;
  Gradient head_grad;
};

void forward_batch(const MlpModel& model, const DenseLayer& head, const double* x,
                   std::size_t batch, std::size_t start, double dropout, Rng* rng,
                   Workspace& ws) {
  const std::size_t depth = model.trunk.size();
  ws.batch = batch;
  ws.inputs.resize(depth + 1);
  ws.sig.resize(depth);
  ws.mask.resize(depth);
  const std::size_t in_width = start < depth ? model.trunk[start].inputs : model.latent_width();
  ws.inputs[start].assign(x, x + batch * in_width);

  std::bernoulli_distribution keep(1.0 - dropout);
  const double inv_keep = 1.0 / (1.0 - dropout);
  for (std::size_t l = start; l < depth; ++l) {
    const DenseLayer& layer = model.trunk[l];
    auto& s = ws.sig[l];
    s.resize(batch * layer.outputs);
    affine(layer, ws.inputs[l].data(), batch, s.data());
    for (double& v : s) v = sigmoid(v);
    auto& next = ws.inputs[l + 1];
    next = s;
    auto& m = ws.mask[l];
    if (dropout > 0.0) {
      m.resize(s.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = keep(*rng) ? inv_keep : 0.0;
        next[i] *= m[i];
      }
    } else {
      m.clear();
    }
  }
  ws.probs.resize(batch * head.outputs);
  affine(head, ws.inputs[depth].data(), batch, ws.probs.data());
  softmax_rows(ws.probs.data(), batch, head.outputs);
}

double batch_loss(const Workspace& ws, const std::size_t* labels, std::size_t classes) {
  double loss = 0.0;
  for (std::size_t b = 0; b < ws.batch; ++b) {
    loss -= std::log(std::max(ws.probs[b * classes + labels[b]], 1e-12));
  }
  return loss / static_cast<double>(ws.batch);
}

// grad_W += in^T * d ; grad_b += colsum(d)
void accumulate_gradient(const double* in, const double* d, std::size_t batch, std::size_t ni,
                         std::size_t no, Gradient& g) {
  g.weights.assign(ni * no, 0.0);
  g.bias.assign(no, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* drow = d + b * no;
    for (std::size_t o = 0; o < no; ++o) g.bias[o] += drow[o];
    const double* a = in + b * ni;
    for (std::size_t i = 0; i < ni; ++i) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      double* gw = g.weights.data() + i * no;
      for (std::size_t o = 0; o < no; ++o) gw[o] += ai * drow[o];
    }
  }
}

// d_in (batch x ni) = d (batch x no) * W^T
void propagate(const DenseLayer& layer, const double* d, std::size_t batch, double* d_in) {
  const std::size_t ni = layer.inputs, no = layer.outputs;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* drow = d + b * no;
    for (std::size_t i = 0; i < ni; ++i) {
      const double* w = layer.weights.data() + i * no;
      double acc = 0.0;
      for (std::size_t o = 0; o < no; ++o) acc += w[o] * drow[o];
      d_in[b * ni + i] = acc;
    }
  }
}

// Gradients of the summed batch cross-entropy (the rate is per sample) for the
// head and trunk layers >= stop.
void backward(const MlpModel& model, const DenseLayer& head, const std::size_t* labels,
              std::size_t stop, Workspace& ws) {
  const std::size_t depth = model.trunk.size();
  const std::size_t batch = ws.batch;
  const std::size_t classes = head.outputs;

  ws.delta = ws.probs;
  for (std::size_t b = 0; b < batch; ++b) ws.delta[b * classes + labels[b]] -= 1.0;
  accumulate_gradient(ws.inputs[depth].data(), ws.delta.data(), batch, head.inputs, classes,
                      ws.head_grad);

  ws.trunk_grad.resize(depth);
  const DenseLayer* above = &head;
  for (std::size_t l = depth; l-- > stop;) {
    const DenseLayer& layer = model.trunk[l];
    ws.delta_prev.resize(batch * layer.outputs);
    propagate(*above, ws.delta.data(), batch, ws.delta_prev.data());
    const auto& s = ws.sig[l];
    const auto& m = ws.mask[l];
    for (std::size_t i = 0; i < ws.delta_prev.size(); ++i) {
      double g = ws.delta_prev[i];
      if (!m.empty()) g *= m[i];
      ws.delta_prev[i] = g * s[i] * (1.0 - s[i]);
    }
    std::swap(ws.delta, ws.delta_prev);
    accumulate_gradient(ws.inputs[l].data(), ws.delta.data(), batch, layer.inputs,
                        layer.outputs, ws.trunk_grad[l]);
    above = &layer;
  }
}

void apply_gradient(DenseLayer& layer, const Gradient& g, double rate) {
  for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights[i] -= rate * g.weights[i];
  for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= rate * g.bias[i];
}

std::size_t first_trainable(const MlpModel& model, const DenseLayer& head) {
  for (std::size_t l = 0; l < model.trunk.size(); ++l) {
    if (model.trunk[l].trainable) return l;
  }
  return head.trainable ? model.trunk.size() : model.trunk.size() + 1;
}

struct BatchBuffer {
  std::vector<double> x;
  std::vector<std::size_t> labels;
};

double step_impl(MlpModel& model, DenseLayer& head, const PreparedData& data,
                 std::span<const std::size_t> batch, const StepOptions& options, Rng& rng,
                 Workspace& ws, BatchBuffer& buf) {
  const std::size_t n = batch.size();
  buf.x.resize(n * data.width);
  buf.labels.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t r = batch[b];
    std::copy_n(data.x.data() + r * data.width, data.width, buf.x.data() + b * data.width);
    buf.labels[b] = data.labels[r];
  }
  forward_batch(model, head, buf.x.data(), n, data.start_layer, options.dropout_rate, &rng, ws);
  const double loss = batch_loss(ws, buf.labels.data(), head.outputs);

  const std::size_t stop = std::max(first_trainable(model, head), data.start_layer);
  if (stop > model.trunk.size()) return loss;
  backward(model, head, buf.labels.data(), stop, ws);
  if (head.trainable) apply_gradient(head, ws.head_grad, options.learning_rate);
  for (std::size_t l = stop; l < model.trunk.size(); ++l) {
    if (model.trunk[l].trainable) apply_gradient(model.trunk[l], ws.trunk_grad[l], options.learning_rate);
  }
  return loss;
}

void check_input(const MlpModel& model, std::size_t width) {
  if (width != model.input_width()) {
    throw ArgumentError("input has " + std::to_string(width) + " features, model expects " +
                        std::to_string(model.input_width()));
  }
}

// Pushes prepared rows through the (frozen, dropout-free) trunk layers [start, until).
PreparedData advance(const MlpModel& model, const PreparedData& data, std::size_t until) {
  if (until <= data.start_layer) return data;
  PreparedData out;
  out.rows = data.rows;
  out.labels = data.labels;
  out.start_layer = until;
  out.width = model.trunk[until - 1].outputs;
  out.x.resize(out.rows * out.width);
  std::vector<double> cur, next;
  std::size_t cur_width = data.width;
  const std::size_t chunk = 256;
  for (std::size_t r0 = 0; r0 < data.rows; r0 += chunk) {
    const std::size_t n = std::min(chunk, data.rows - r0);
    cur.assign(data.x.begin() + static_cast<std::ptrdiff_t>(r0 * cur_width),
               data.x.begin() + static_cast<std::ptrdiff_t>((r0 + n) * cur_width));
    for (std::size_t l = data.start_layer; l < until; ++l) {
      const DenseLayer& layer = model.trunk[l];
      next.resize(n * layer.outputs);
      affine(layer, cur.data(), n, next.data());
      for (double& v : next) v = sigmoid(v);
      std::swap(cur, next);
    }
    std::copy(cur.begin(), cur.end(), out.x.begin() + static_cast<std::ptrdiff_t>(r0 * out.width));
  }
  return out;
}

}  // namespace

ForwardPass forward(const MlpModel& model, std::span<const double> x, std::string_view head,
                    Mode mode, Rng* dropout_rng) {
  check_input(model, x.size());
  const DenseLayer& out_layer = model.head(head);
  const double dropout = mode == Mode::train ? model.config.dropout_rate : 0.0;
  if (dropout > 0.0 && dropout_rng == nullptr) {
    throw ArgumentError("forward in train mode needs a dropout RNG");
  }
  std::vector<double> scaled(x.size());
  standardize(model.scaler, x, scaled.data());
  Workspace ws;
  forward_batch(model, out_layer, scaled.data(), 1, 0, dropout, dropout_rng, ws);
  ForwardPass pass;
  pass.probabilities = std::move(ws.probs);
  pass.activations = std::move(ws.inputs);
  return pass;
}

std::vector<double> predict_proba(const MlpModel& model, std::span<const double> x,
                                  std::string_view head) {
  return forward(model, x, head).probabilities;
}

PreparedData prepare(const MlpModel& model, const Dataset& data) {
  PreparedData out;
  out.rows = data.size();
  out.width = model.input_width();
  out.x.resize(out.rows * out.width);
  out.labels.resize(out.rows);
  for (std::size_t r = 0; r < out.rows; ++r) {
    const auto& s = data.samples[r];
    check_input(model, s.features.size());
    standardize(model.scaler, s.features, out.x.data() + r * out.width);
    out.labels[r] = s.label;
  }
  return out;
}

double sgd_step(MlpModel& model, const PreparedData& data, std::span<const std::size_t> batch,
                std::string_view head, const StepOptions& options, Rng& rng) {
  if (batch.empty()) throw ArgumentError("sgd_step: empty batch");
  DenseLayer& out_layer = model.head(head);
  for (std::size_t r : batch) {
    if (r >= data.rows) throw ArgumentError("sgd_step: batch row out of range");
    if (data.labels[r] >= out_layer.outputs) throw ArgumentError("sgd_step: label out of range");
  }
  if (data.start_layer > 0) {
    if (options.dropout_rate > 0.0) {
      throw ArgumentError("sgd_step: cached trunk activations cannot be combined with dropout");
    }
    for (std::size_t l = 0; l < data.start_layer; ++l) {
      if (model.trunk[l].trainable) {
        throw ArgumentError("sgd_step: cached activations skip a trainable layer");
      }
    }
  }
  Workspace ws;
  BatchBuffer buf;
  return step_impl(model, out_layer, data, batch, options, rng, ws, buf);
}

Rng training_rng(const MlpConfig& config) { return Rng(derive_seed(config.seed, "train")); }

TrainingLog train(MlpModel& model, const Dataset& data, std::string_view head,
                  const TrainOptions& options) {
  if (data.empty()) throw ArgumentError("train: empty dataset");
  check_input(model, data.feature_width());
  DenseLayer& out_layer = model.head(head);
  for (const auto& s : data.samples) {
    if (s.label >= out_layer.outputs) {
      throw ArgumentError("train: label " + std::to_string(s.label) + " outside head of width " +
                          std::to_string(out_layer.outputs));
    }
  }
  if (!model.trained()) {
    model.feature_mode = data.mode;
  } else if (!same_feature_space(model.feature_mode, data.mode)) {
    throw ArgumentError("train: model expects " + std::string(to_string(model.feature_mode)) +
                        " features, dataset is " + std::string(to_string(data.mode)));
  }
  if (model.config.standardize_inputs && !model.scaler.fitted()) fit_input_scaler(model, data);

  const std::size_t epochs = options.epochs.value_or(model.config.epochs);
  const StepOptions step{options.learning_rate.value_or(model.config.learning_rate),
                         options.dropout_rate.value_or(model.config.dropout_rate)};
  if (!(step.dropout_rate >= 0.0 && step.dropout_rate < 1.0)) {
    throw ArgumentError("train: dropout rate must lie in [0, 1)");
  }

  PreparedData prepared = prepare(model, data);
  if (step.dropout_rate == 0.0) {
    const std::size_t frozen = std::min(first_trainable(model, out_layer), model.trunk.size());
    prepared = advance(model, prepared, frozen);
  }

  Rng rng = training_rng(model.config);
  std::vector<std::size_t> order(prepared.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = model.config.batch_size;
  Workspace ws;
  BatchBuffer buf;
  TrainingLog log;
  log.epoch_loss.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    if (model.config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); i += bs) {
      const std::size_t n = std::min(bs, order.size() - i);
      std::span<const std::size_t> batch(order.data() + i, n);
      total += step_impl(model, out_layer, prepared, batch, step, rng, ws, buf) *
               static_cast<double>(n);
    }
    log.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  model.head_samples[std::string(head)] = data.size();
  return log;
}

double gradient_check(const MlpModel& model, std::span<const double> x, std::size_t label,
                      std::string_view head, std::size_t samples, std::uint64_t seed) {
  check_input(model, x.size());
  const DenseLayer& out_layer = model.head(head);
  if (label >= out_layer.outputs) throw ArgumentError("gradient_check: label out of range");

  std::vector<double> scaled(x.size());
  standardize(model.scaler, x, scaled.data());
  Workspace ws;
  forward_batch(model, out_layer, scaled.data(), 1, 0, 0.0, nullptr, ws);
  backward(model, out_layer, &label, 0, ws);

  // (layer, index) over trunk layers 0..L-1 then the head; index >= weights.size() is a bias.
  struct Param {
    std::size_t layer;
    std::size_t index;
  };
  const std::size_t depth = model.trunk.size();
  std::vector<Param> params;
  for (std::size_t l = 0; l <= depth; ++l) {
    const DenseLayer& layer = l < depth ? model.trunk[l] : out_layer;
    for (std::size_t i = 0; i < layer.parameter_count(); ++i) params.push_back({l, i});
  }
  if (params.size() > samples) {
    Rng rng(derive_seed(seed, "gradient_check"));
    std::vector<Param> picked;
    std::sample(params.begin(), params.end(), std::back_inserter(picked), samples, rng);
    params = std::move(picked);
  }

  MlpModel probe = model;
  DenseLayer& probe_head = probe.head(head);
  auto loss_at = [&]() {
    Workspace w;
    forward_batch(probe, probe_head, scaled.data(), 1, 0, 0.0, nullptr, w);
    return -std::log(std::max(w.probs[label], 1e-12));
  };
  auto slot = [&](const Param& p) -> double& {
    DenseLayer& layer = p.layer < depth ? probe.trunk[p.layer] : probe_head;
    return p.index < layer.weights.size() ? layer.weights[p.index]
                                          : layer.bias[p.index - layer.weights.size()];
  };
  auto analytic = [&](const Param& p) {
    const Gradient& g = p.layer < depth ? ws.trunk_grad[p.layer] : ws.head_grad;
    return p.index < g.weights.size() ? g.weights[p.index] : g.bias[p.index - g.weights.size()];
  };

  constexpr double h = 1e-5;
  double worst = 0.0;
  for (const auto& p : params) {
    double& v = slot(p);
    const double saved = v;
    v = saved + h;
    const double up = loss_at();
    v = saved - h;
    const double down = loss_at();
    v = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(p);
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

std::string_view to_string(DecodeStrategy strategy) {
  return strategy == DecodeStrategy::argmax ? "argmax" : "center_of_mass";
}

DecodeStrategy parse_decode_strategy(std::string_view name) {
  if (name == "argmax") return DecodeStrategy::argmax;
  if (name == "center_of_mass" || name == "com") return DecodeStrategy::center_of_mass;
  throw ArgumentError("unknown decode strategy '" + std::string(name) + "'");
}

Point decode_location(std::span<const double> probabilities, const Grid& grid,
                      DecodeStrategy strategy) {
  if (probabilities.size() != grid.cell_count()) {
    throw ArgumentError("distribution over " + std::to_string(probabilities.size()) +
                        " classes does not match grid of " + std::to_string(grid.cell_count()) +
                        " cells");
  }
  if (strategy == DecodeStrategy::argmax) {
    const auto best = std::max_element(probabilities.begin(), probabilities.end());
    return grid.cell_center(static_cast<std::size_t>(best - probabilities.begin()));
  }
  double x = 0.0, y = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    const double p = probabilities[k];
    if (p == 0.0) continue;
    const Point c = grid.cell_center(k);
    x += p * c.x;
    y += p * c.y;
    mass += p;
  }
  if (mass <= 0.0) throw ArgumentError("decode_location: distribution has no mass");
  return {x / mass, y / mass};
}

Point predict_location(const MlpModel& model, std::span<const double> x, std::string_view head,
                       const Grid& grid, DecodeStrategy strategy) {
  return decode_location(predict_proba(model, x, head), grid, strategy);
}

double accuracy(const MlpModel& model, const Dataset& data, std::string_view head) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : data.samples) {
    const auto p = predict_proba(model, s.features, head);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace hetloc::net
