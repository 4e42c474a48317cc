#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxai/predictor.hpp"
#include "cxai/schema.hpp"

namespace cxai {

enum class Method { ComparablesOnly, LinearRegression, LinearAdjustments, TraceAdjustments };

std::string_view method_name(Method m);
/// Accepts the CLI spellings (comparables, regression, linear-adjust, trace)
/// as well as the canonical names.
std::optional<Method> parse_method(std::string_view name);

struct Comparable {
  Instance instance;
  double actual_value = 0.0;  // y_c
  double ai_prediction = 0.0; // f(x_c)
  std::optional<std::size_t> row;  // index in the source dataset
};

struct ComparableSet {
  Instance subject;
  Vector subject_z;
  std::vector<Comparable> comparables;
  std::vector<Vector> comparables_z;
  std::vector<double> distances;
  std::vector<double> similarities;  // sums to 1

  std::size_t size() const { return comparables.size(); }
  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
};

struct Bounds {
  double low = 0.0;
  double high = 0.0;
  double width() const { return high - low; }
};

struct ReconciledEstimate {
  double point_estimate = 0.0;
  Bounds bounds;
  Method method = Method::ComparablesOnly;
};

inline constexpr double kSimilarityEpsilon = 1e-6;

/// rho_c proportional to 1 / (d_c + eps), normalized to sum to one.
std::vector<double> similarities_from_distances(std::span<const double> distances);

/// Picks the k rows nearest to `subject` (standardized Manhattan, ties by
/// dataset order) and queries `predictor` for their AI predictions.
/// `exclude_row` removes the subject's own row from the candidate pool.
ComparableSet select_comparables(const Dataset& dataset, const Standardizer& std,
                                 const Instance& subject, std::size_t k,
                                 const Predictor& predictor,
                                 std::optional<std::size_t> exclude_row = std::nullopt);

/// Builds a set from explicit comparables; distances and similarities are
/// computed from the standardized vectors.
ComparableSet make_comparable_set(const Standardizer& std, const Instance& subject,
                                  std::vector<Comparable> comparables);

enum class ValueChannel { ActualValues, AiPredictions };

/// Similarity-weighted mean of the chosen channel; bounds are its min/max.
ReconciledEstimate weighted_average(const ComparableSet& set, ValueChannel use);
/// The same reconciliation over arbitrary per-comparable values.
double weighted_mean(std::span<const double> values, std::span<const double> weights);

/// (min, max); EmptyInput on an empty list.
Bounds uncertainty_bounds(std::span<const double> values);

}  // namespace cxai
