#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxai/comparables.hpp"
#include "cxai/task.hpp"
#include "cxai/trace.hpp"

namespace cxai {

enum class SweepAxis { NumberOfComparables, AverageDistance };

/// One modeling-study sweep.
///
/// JSON form:
///   {
///     "dataset": {"kind": "synthetic", "model": {...}, "rows": 400, "noise_std": 0.1, "seed": 0}
///              | {"kind": "csv", "path": "...", "schema": "..."},
///     "predictor": <PredictorSpec JSON>,          // synthetic datasets default to their model
///     "methods": ["comparables", "regression", "linear-adjust", "trace"],
///     "axis": {"kind": "comparables", "values": [2, 4, 8]}
///           | {"kind": "distance", "k": 4, "edges": [...]} | {"kind": "distance", "k": 4, "bins": 8},
///     "n_subjects": 20,
///     "seed": 1 | "seeds": [1, 2, ...],
///     "trace": {"lambda_s": 10, ...}                // DesiderataConfig overrides
///   }
/// Relative paths are resolved against `base_dir`.
struct SweepSpec {
  struct SyntheticData {
    std::string model_json;
    std::size_t rows = 400;
    double noise_std = 0.1;
    std::uint64_t seed = 0;
  };
  std::optional<SyntheticData> synthetic;
  std::filesystem::path dataset_path;
  std::filesystem::path schema_path;
  std::optional<PredictorSpec> predictor;

  std::vector<Method> methods;
  SweepAxis axis = SweepAxis::NumberOfComparables;
  std::vector<std::size_t> k_values;
  std::size_t distance_k = 4;
  std::vector<double> bin_edges;  // empty: `bins` equal-width bins over the observed range
  std::size_t bins = 8;
  std::size_t n_subjects = 1;
  std::vector<std::uint64_t> seeds{0};
  DesiderataConfig trace;

  /// InvalidArgument on an empty method list, k outside [1, 8], unsorted
  /// edges, zero subjects or no seeds.
  void validate() const;
};

SweepSpec parse_sweep_spec(const std::string& json_text, const std::filesystem::path& base_dir = {});

/// Dataset, standardizer and predictor a sweep runs against.
struct EvalTask {
  Dataset dataset;
  Standardizer std;
  PredictorPtr predictor;
};
EvalTask load_task(const SweepSpec& spec);

/// Metric means for one (method, axis value, seed) cell.
struct EvalCell {
  Method method = Method::ComparablesOnly;
  double axis_value = 0.0;  // k, or the distance bin centre
  std::size_t bin = 0;      // distance bin index (comparables axis: index of k)
  std::uint64_t seed = 0;
  std::size_t count = 0;
  double prediction_error = 0.0;  // |value-anchored estimate - actual|
  double unfaithfulness = 0.0;    // |prediction-space estimate - AI prediction|
  double bounds_width = 0.0;
};

struct EvalReport {
  SweepAxis axis = SweepAxis::NumberOfComparables;
  std::vector<double> bin_edges;
  std::vector<EvalCell> cells;  // ordered by seed, axis value, method

  /// Sample-weighted means across seeds, one cell per (method, axis value);
  /// the seed field is zero.
  std::vector<EvalCell> summary() const;
  /// Long format: method,axis,axis_value,metric,value,seed,count
  std::string to_csv() const;
  /// Format "cxai.eval_report", version 1.
  std::string to_json() const;
};

/// Per-subject outcome of one explanation method.
struct MethodOutcome {
  double value_estimate = 0.0;
  double prediction_estimate = 0.0;
  Bounds bounds;
};

/// Runs `method` on a selected comparable set. Trace and linear-adjust fits
/// are seeded from `seed` and the comparable rows.
MethodOutcome run_method(Method method, const ComparableSet& set, const Predictor& p,
                         const FeatureLayout& layout, NumericStats target, const DesiderataConfig& cfg,
                         std::uint64_t seed);

EvalReport run_sweep(const SweepSpec& spec, const EvalTask& task);
EvalReport run_sweep(const SweepSpec& spec);

/// Sensitivity analysis on one fixed explanation task.
///
/// JSON form:
///   {"task": {"model": {...}, "comparable": [...], "subject": [...]},
///    "base": {DesiderataConfig overrides}, "vary": "lambda_s",
///    "values": [0, 1, 10, 100], "seeds": [...] | "n_seeds": 20}
/// Task coordinates are standardized; the target is in standardized units.
struct SensitivitySpec {
  std::string model_json;
  Vector comparable_z;
  Vector subject_z;
  DesiderataConfig base;
  std::string vary;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

SensitivitySpec parse_sensitivity_spec(const std::string& json_text);

struct SensitivityRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double unfaithfulness = 0.0;  // L_F of the trained trace
  int adjustments = 0;
  int reversals = 0;
  double unevenness = 0.0;      // Var of the segment value deltas
  std::vector<Vector> knots;
  std::vector<double> knot_values;
};

struct SensitivitySummary {
  double lambda = 0.0;
  std::size_t n = 0;
  double unfaithfulness_mean = 0.0, unfaithfulness_sd = 0.0;
  double adjustments_mean = 0.0, adjustments_sd = 0.0;
  double reversals_mean = 0.0, reversals_sd = 0.0;
  double unevenness_mean = 0.0, unevenness_sd = 0.0;
};

struct SensitivityReport {
  std::string vary;
  std::vector<SensitivityRow> rows;  // ordered by value, then seed
  std::vector<SensitivitySummary> summary;

  std::string to_csv() const;
  /// Format "cxai.sensitivity_report", version 1.
  std::string to_json() const;
};

/// Sets the weight named by `vary` (lambda_f..lambda_e). InvalidArgument
/// for any other name.
void set_lambda(DesiderataConfig& cfg, const std::string& vary, double value);

SensitivityReport run_sensitivity(const Predictor& p, std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const DesiderataConfig& base,
                                  const std::string& vary, std::span<const double> values,
                                  std::span<const std::uint64_t> seeds);
SensitivityReport run_sensitivity(const SensitivitySpec& spec);

/// A participant's 90% credible interval for one case and the actual value.
struct DecisionResponse {
  double y_min = 0.0;
  double y_max = 0.0;
  double actual = 0.0;

  double y_mean() const { return 0.5 * (y_min + y_max); }
  /// InvalidArgument when y_min > y_max or a value is not finite.
  void validate() const;
};

/// z_0.95 - z_0.05 of the standard normal.
double normal_90_span();

/// Gaussian density of the actual value with mean y_mean and
/// sigma = (y_max - y_min) / (z_0.95 - z_0.05). ZeroWidthInterval when
/// y_max == y_min.
double correctness_probability_density(const DecisionResponse& r);

inline constexpr double kLogFloor = 1e-9;

struct DecisionMetrics {
  double mean_error_log = 0.0;        // ln |y_mean - y|
  double credible_interval_log = 0.0; // ln (y_max - y_min)
  double density = 0.0;
  bool zero_error = false;  // |y_mean - y| was floored at kLogFloor
};

DecisionMetrics decision_metrics(const DecisionResponse& r);

}  // namespace cxai
