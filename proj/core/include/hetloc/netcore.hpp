#pragma once

// Multilayer perceptron used as the fingerprint classifier: sigmoid hidden
// layers (the shared trunk), one or more softmax output heads, inverted
// dropout, softmax cross-entropy and plain mini-batch SGD.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetloc/domain.hpp"
#include "hetloc/random.hpp"

namespace hetloc::net {

inline constexpr std::string_view kDefaultHead = "default";

enum class Activation { sigmoid };

struct MlpConfig {
  /// Input width, hidden widths..., output width.
  std::vector<std::size_t> layer_sizes{25, 256, 128, 64, 20};
  double learning_rate = 0.005;
  std::size_t batch_size = 40;
  double dropout_rate = 0.10;
  std::size_t epochs = 500;
  Activation hidden_activation = Activation::sigmoid;
  std::uint64_t seed = 0;
  /// Reshuffle the training set every epoch. Off means batches follow dataset order.
  bool shuffle = true;
  /// Standardize each input feature with statistics of the first training set.
  bool standardize_inputs = true;

  std::size_t input_width() const { return layer_sizes.front(); }
  std::size_t output_width() const { return layer_sizes.back(); }
  std::size_t hidden_layers() const { return layer_sizes.size() - 2; }

  /// Throws ConfigError on fewer than one hidden layer, zero widths,
  /// dropout outside [0, 1), non-positive learning rate or zero batch size.
  void validate() const;
};

/// Fully connected layer. `weights` is inputs x outputs, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  bool trainable = true;

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-feature affine standardization x -> (x - mean) / scale.
struct InputScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  bool fitted() const { return !mean.empty(); }
  friend bool operator==(const InputScaler&, const InputScaler&) = default;
};

struct MlpModel {
  MlpConfig config;
  InputScaler scaler;
  FeatureMode feature_mode = FeatureMode::raw;
  /// Hidden layers; trunk.back().outputs is the latent width every head reads.
  std::vector<DenseLayer> trunk;
  std::map<std::string, DenseLayer, std::less<>> heads;
  /// Number of samples each head has been trained on.
  std::map<std::string, std::size_t, std::less<>> head_samples;
  /// Inventory and grid the model was trained for, when known.
  std::optional<Site> site;

  std::size_t input_width() const { return trunk.front().inputs; }
  std::size_t latent_width() const { return trunk.back().outputs; }
  bool has_head(std::string_view name) const { return heads.find(name) != heads.end(); }
  /// Throws LookupError naming the registered heads.
  const DenseLayer& head(std::string_view name) const;
  DenseLayer& head(std::string_view name);
  std::vector<std::string> head_names() const;
  bool trained() const { return !head_samples.empty(); }
};

/// Glorot-uniform weights on +/- sqrt(6 / (fan_in + fan_out)), zero biases.
DenseLayer init_layer(std::size_t inputs, std::size_t outputs, Rng& rng);

/// Builds the trunk and the default head from `config.seed`. Same seed, same
/// bits. Throws ConfigError for an invalid config.
MlpModel init_model(const MlpConfig& config);

/// Registers (or replaces) a head of width `classes` with weights drawn from `seed`.
void add_head(MlpModel& model, std::string name, std::size_t classes, std::uint64_t seed);

void set_trunk_trainable(MlpModel& model, bool trainable);

/// Fits the input scaler on the pooled features of `datasets`.
void fit_input_scaler(MlpModel& model, std::span<const Dataset* const> datasets);
void fit_input_scaler(MlpModel& model, const Dataset& data);

enum class Mode { eval, train };

struct ForwardPass {
  std::vector<double> probabilities;
  /// Standardized input followed by each hidden layer's output (after dropout in train mode).
  std::vector<std::vector<double>> activations;
};

/// Throws ArgumentError on width mismatch or when train mode lacks an RNG,
/// LookupError for an unknown head.
ForwardPass forward(const MlpModel& model, std::span<const double> x,
                    std::string_view head = kDefaultHead, Mode mode = Mode::eval,
                    Rng* dropout_rng = nullptr);

std::vector<double> predict_proba(const MlpModel& model, std::span<const double> x,
                                  std::string_view head = kDefaultHead);

/// Standardized dataset rows stored contiguously, optionally already pushed
/// through a frozen prefix of the trunk (`start_layer` > 0).
struct PreparedData {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t start_layer = 0;
  std::vector<double> x;
  std::vector<std::size_t> labels;
};

/// Throws ArgumentError on width mismatch.
PreparedData prepare(const MlpModel& model, const Dataset& data);

struct StepOptions {
  double learning_rate = 0.005;
  double dropout_rate = 0.0;
};

/// One SGD update on the rows `batch` of `data`, through `head`: every sample
/// contributes its own gradient scaled by the learning rate. Only layers
/// flagged trainable change. Returns the batch mean cross-entropy before the update.
double sgd_step(MlpModel& model, const PreparedData& data, std::span<const std::size_t> batch,
                std::string_view head, const StepOptions& options, Rng& rng);

struct TrainOptions {
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<double> dropout_rate;
};

struct TrainingLog {
  /// Mean training cross-entropy per epoch, in epoch order.
  std::vector<double> epoch_loss;
};

/// Seeded stream used for shuffling and dropout during training.
Rng training_rng(const MlpConfig& config);

/// Mini-batch SGD on softmax cross-entropy. Fits the input scaler first if
/// the model has none and the config asks for standardization. Throws
/// ArgumentError for an empty dataset, mismatched width or out-of-range label.
TrainingLog train(MlpModel& model, const Dataset& data, std::string_view head = kDefaultHead,
                  const TrainOptions& options = {});

/// Max relative error between backprop gradients and central differences
/// (step 1e-5) over `samples` random parameters (all of them if fewer),
/// evaluated without dropout.
double gradient_check(const MlpModel& model, std::span<const double> x, std::size_t label,
                      std::string_view head = kDefaultHead, std::size_t samples = 100,
                      std::uint64_t seed = 0);

enum class DecodeStrategy { argmax, center_of_mass };

std::string_view to_string(DecodeStrategy strategy);
DecodeStrategy parse_decode_strategy(std::string_view name);

/// argmax: center of the most probable cell, lowest index on ties.
/// center_of_mass: probability-weighted mean of all cell centers.
Point decode_location(std::span<const double> probabilities, const Grid& grid,
                      DecodeStrategy strategy);

/// Throws ArgumentError when the head width differs from the grid's K.
Point predict_location(const MlpModel& model, std::span<const double> x, std::string_view head,
                       const Grid& grid, DecodeStrategy strategy = DecodeStrategy::argmax);

/// Fraction of samples whose argmax class equals the label.
double accuracy(const MlpModel& model, const Dataset& data, std::string_view head = kDefaultHead);

}  // namespace hetloc::net
