#pragma once

// Experiment driver: train device x test device x heterogeneity technique,
// localization error percentiles, CDFs and a summary table comparing the
// unhandled baseline with the best handling technique.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hetloc/domain.hpp"
#include "hetloc/ingest.hpp"
#include "hetloc/netcore.hpp"
#include "hetloc/worldgen.hpp"

namespace hetloc::harness {

enum class Technique { none, linear, ratio, difference, transfer, multitask };

inline constexpr std::array<Technique, 6> kAllTechniques{
    Technique::none,     Technique::linear,   Technique::ratio,
    Technique::difference, Technique::transfer, Technique::multitask};

std::string_view to_string(Technique technique);
/// Throws ArgumentError for an unknown name.
Technique parse_technique(std::string_view name);

struct SampleSizes {
  std::size_t train_per_cell = 50;
  /// Per-cell size of the small slave set (calibration pairs / fine-tuning).
  std::size_t calibration_per_cell = 50;
  std::size_t test_per_cell = 25;
};

struct SyntheticScenario {
  worldgen::WorldConfig world;
  std::vector<worldgen::DeviceProfile> devices;

  /// Throws LookupError for an unknown device.
  const worldgen::DeviceProfile& device(std::string_view id) const;
};

struct DeviceScans {
  std::vector<RssScan> train;
  std::vector<RssScan> calibration;
  std::vector<RssScan> test;
};

/// Pre-recorded scans (e.g. parsed logs) per device and role.
struct ScanCorpus {
  Site site;
  std::map<std::string, DeviceScans, std::less<>> devices;
};

struct ModelSettings {
  std::vector<std::size_t> hidden_layers{256, 128, 64};
  double learning_rate = 0.005;
  std::size_t batch_size = 40;
  double dropout_rate = 0.10;
  std::size_t epochs = 500;
  std::size_t fine_tune_epochs = 100;
  double fine_tune_rate = 0.005;
  bool copy_master_head = false;
  bool standardize_inputs = true;
};

struct ExperimentSpec {
  std::string name;
  std::variant<SyntheticScenario, std::shared_ptr<const ScanCorpus>> source;
  std::string master_device;
  std::string slave_device;
  Technique technique = Technique::none;
  net::DecodeStrategy strategy = net::DecodeStrategy::argmax;
  std::uint64_t seed = 0;
  SampleSizes sizes;
  ModelSettings model;
  std::int64_t pairing_window_s = 2;
};

struct ExperimentReport {
  std::string name;
  Technique technique = Technique::none;
  std::string master_device;
  std::string slave_device;
  net::DecodeStrategy strategy = net::DecodeStrategy::argmax;
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  std::size_t adaptation_samples = 0;
  /// Euclidean distance from decoded location to ground truth, one per test sample.
  std::vector<double> errors_m;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  std::vector<ingest::CdfPoint> cdf;
};

/// q-th percentile (q in [0, 100]) by linear interpolation between the
/// closest order statistics. Throws ArgumentError on an empty list.
double percentile(std::span<const double> values, double q);

/// Sorted values with cumulative fraction i/n.
std::vector<ingest::CdfPoint> empirical_cdf(std::span<const double> values);

/// (disabled - enabled) / enabled * 100: how much worse the unhandled
/// baseline is than the handled result.
double relative_change_pct(double enabled, double disabled);

/// Raw scans the experiment needs, generated for synthetic sources.
ScanCorpus materialize(const ExperimentSpec& spec);

/// Throws ConfigError when the source lacks data the technique needs.
ExperimentReport run_experiment(const ExperimentSpec& spec);
ExperimentReport run_experiment(const ExperimentSpec& spec, const ScanCorpus& corpus);

struct MatrixRow {
  std::string experiment;
  Technique technique = Technique::none;
  std::optional<ExperimentReport> report;
  std::string error;
};

/// One summary line: `disabled` is the unhandled baseline, `enabled`
/// the technique with the lowest median error.
struct SummaryRow {
  std::string experiment;
  std::string handling;
  Technique technique = Technique::none;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  /// Degradation relative to the enabled row, per percentile (disabled rows only).
  std::optional<std::array<double, 3>> change_pct;
};

struct MatrixResult {
  std::vector<MatrixRow> rows;
  std::vector<SummaryRow> summary;

  bool ok() const;
};

std::vector<SummaryRow> summarize(std::span<const MatrixRow> rows);

/// Runs every spec (in parallel when `threads` != 1; 0 picks the hardware
/// concurrency). A failing spec is recorded in its row; the rest still run.
/// Throws ArgumentError for an empty spec list.
MatrixResult run_matrix(std::span<const ExperimentSpec> specs, std::size_t threads = 0);

/// results.csv, summary.csv, one cdf_<experiment>_<technique>.csv per
/// completed row and failures.csv when any row failed.
void write_matrix_outputs(const MatrixResult& result, const std::filesystem::path& dir);

/// Urban analog: 500 x 400 m, 25 towers, 20 cells; device B reads +10 dB above A.
SyntheticScenario urban_scenario(std::uint64_t seed);
/// Rural analog: 800 x 600 m, 16 towers, 48 cells; device D is a strong
/// affine distortion of C with per-tower jitter.
SyntheticScenario rural_scenario(std::uint64_t seed);

struct StandardMatrixOptions {
  std::uint64_t seed = 0;
  std::vector<std::string> experiments{"I", "II", "III", "IV"};
  std::vector<Technique> techniques{kAllTechniques.begin(), kAllTechniques.end()};
  SampleSizes sizes;
  ModelSettings model;
  net::DecodeStrategy strategy = net::DecodeStrategy::argmax;
};

/// Synthetic analog of the four cross-device experiments:
/// I A->B and II B->A (urban), III C->D and IV D->C (rural).
std::vector<ExperimentSpec> standard_matrix(const StandardMatrixOptions& options);

}  // namespace hetloc::harness
