#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cxai/comparables.hpp"
#include "cxai/predictor.hpp"
#include "cxai/schema.hpp"

namespace cxai {

struct FitDiagnostics {
  double residual_rmse = 0.0;
  /// Ratio of the largest to the smallest eigenvalue of the centered Gram
  /// matrix; infinite when it is singular.
  double condition = 1.0;
  /// True when the system had fewer samples than unknowns or was singular and
  /// the ridge term picked the minimum-norm solution.
  bool regularized = false;
};

struct LinearModel {
  Vector weights;
  double bias = 0.0;
  FitDiagnostics diagnostics;

  double evaluate(std::span<const double> x) const;
};

inline constexpr double kRidgeLambda = 1e-6;

/// Ridge least squares (penalty on the weights only) of `targets` on `xs`.
/// `sample_weights` may be empty for an unweighted fit.
LinearModel fit_least_squares(std::span<const Vector> xs, std::span<const double> targets,
                              std::span<const double> sample_weights = {},
                              double ridge = kRidgeLambda);

/// Linear regression of the comparables' actual values on their encoded
/// attributes.
LinearModel fit_regression(const ComparableSet& set);
/// Same fit on the comparables' AI predictions.
LinearModel fit_regression_on_predictions(const ComparableSet& set);

/// w.x_s + b, bounded by the range of the model's fitted values at the
/// comparables.
ReconciledEstimate regression_estimate(const LinearModel& model, std::span<const double> subject,
                                       std::span<const Vector> comparables_z);

struct LocalSamplingOptions {
  double radius = 1.0;
  std::size_t samples = 512;
  std::uint64_t seed = 0;
};

struct LocalLinearModel {
  Vector anchor;
  LinearModel model;
  double sampling_radius = 1.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

/// Weighted least-squares surrogate of `p` around `anchor`: perturbations
/// drawn uniformly from the L-infinity ball of `radius`, Gaussian-weighted by
/// their Euclidean distance to the anchor with bandwidth `radius`.
LocalLinearModel fit_local_linear(const Predictor& p, const Vector& anchor,
                                  const LocalSamplingOptions& options = {});

struct AttributeAdjustment {
  std::string attribute;
  AttributeValue from;
  AttributeValue to;
  double value_change = 0.0;  // standardized units; 1 for a level switch
  double money_delta = 0.0;   // target units
};

enum class Anchoring { ActualValue, Prediction };

struct AdjustmentBreakdown {
  std::vector<AttributeAdjustment> deltas;  // one per attribute
  double total_adjustment = 0.0;
  double adjusted_value = 0.0;
  /// Surrogate evaluated at the subject (w_c.x_s + b_c).
  double model_estimate = 0.0;
};

/// Per-attribute deltas w_c^(r) (x_s^(r) - x_c^(r)), one-hot blocks summed
/// into a single delta. Anchored to the comparable's actual value, or to its
/// AI prediction in Prediction mode.
AdjustmentBreakdown linear_adjust(const LocalLinearModel& model, const Comparable& comparable,
                                  std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const Standardizer& std,
                                  const Instance& subject,
                                  Anchoring anchoring = Anchoring::ActualValue);

/// Layout-only variant for callers without a schema (attributes named x0, x1...).
AdjustmentBreakdown linear_adjust(const LocalLinearModel& model, double anchor_value,
                                  std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const FeatureLayout& layout);

}  // namespace cxai
