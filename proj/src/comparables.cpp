#include "cxai/comparables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cxai {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ComparablesOnly: return "ComparablesOnly";
    case Method::LinearRegression: return "LinearRegression";
    case Method::LinearAdjustments: return "LinearAdjustments";
    case Method::TraceAdjustments: return "TraceAdjustments";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "comparables" || name == "comparables-only" || name == "ComparablesOnly")
    return Method::ComparablesOnly;
  if (name == "regression" || name == "LinearRegression") return Method::LinearRegression;
  if (name == "linear-adjust" || name == "LinearAdjustments") return Method::LinearAdjustments;
  if (name == "trace" || name == "TraceAdjustments") return Method::TraceAdjustments;
  return std::nullopt;
}

void ComparableSet::validate() const {
  const std::size_t n = comparables.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "comparable set is empty");
  if (similarities.size() != n || distances.size() != n || comparables_z.size() != n)
    throw Error(ErrorCode::InvalidArgument, "comparable set arrays disagree in length");
  double sum = 0.0;
  for (double s : similarities) {
    if (!(s > 0.0 && s <= 1.0)) throw Error(ErrorCode::InvalidArgument, "similarity outside (0, 1]");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "similarities do not sum to 1");
  for (double d : distances)
    if (!(d >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative distance");
  for (const auto& c : comparables)
    if (!std::isfinite(c.actual_value) || !std::isfinite(c.ai_prediction))
      throw Error(ErrorCode::InvalidArgument, "non-finite comparable value");
}

std::vector<double> similarities_from_distances(std::span<const double> distances) {
  if (distances.empty()) throw Error(ErrorCode::EmptyInput, "no distances");
  std::vector<double> rho(distances.size());
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    rho[i] = 1.0 / (distances[i] + kSimilarityEpsilon);
    total += rho[i];
  }
  for (double& r : rho) r /= total;
  return rho;
}

ComparableSet make_comparable_set(const Standardizer& std, const Instance& subject,
                                  std::vector<Comparable> comparables) {
  ComparableSet set;
  set.subject = subject;
  set.subject_z = std.standardize(subject);
  set.comparables = std::move(comparables);
  for (const auto& c : set.comparables) {
    set.comparables_z.push_back(std.standardize(c.instance));
    set.distances.push_back(std.layout().distance(set.subject_z, set.comparables_z.back()));
  }
  set.similarities = similarities_from_distances(set.distances);
  set.validate();
  return set;
}

ComparableSet select_comparables(const Dataset& dataset, const Standardizer& std,
                                 const Instance& subject, std::size_t k,
                                 const Predictor& predictor,
                                 std::optional<std::size_t> exclude_row) {
  const std::size_t pool = dataset.size() - (exclude_row && *exclude_row < dataset.size() ? 1 : 0);
  if (k == 0 || k > pool)
    throw Error(ErrorCode::KTooLarge,
                "k=" + std::to_string(k) + " with " + std::to_string(pool) + " candidate rows");
  const Vector subject_z = std.standardize(subject);

  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (exclude_row && i == *exclude_row) continue;
    ranked.emplace_back(std.layout().distance(subject_z, std.standardize(dataset.rows[i].instance)), i);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  ComparableSet set;
  set.subject = subject;
  set.subject_z = subject_z;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& row = dataset.rows[ranked[j].second];
    Comparable c;
    c.instance = row.instance;
    c.actual_value = row.actual_value;
    c.row = ranked[j].second;
    set.comparables.push_back(std::move(c));
    set.comparables_z.push_back(std.standardize(row.instance));
    set.distances.push_back(ranked[j].first);
  }
  const auto preds = predictor.predict(set.comparables_z);
  for (std::size_t j = 0; j < k; ++j) set.comparables[j].ai_prediction = preds[j];
  set.similarities = similarities_from_distances(set.distances);
  set.validate();
  return set;
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "weighted mean of nothing");
  if (values.size() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "one weight per value required");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += weights[i] * values[i];
    den += weights[i];
  }
  const double mean = num / den;
  // Rounding can push the mean a hair outside the hull of the values.
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return std::clamp(mean, *lo, *hi);
}

Bounds uncertainty_bounds(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "uncertainty bounds of nothing");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

ReconciledEstimate weighted_average(const ComparableSet& set, ValueChannel use) {
  std::vector<double> values;
  values.reserve(set.size());
  for (const auto& c : set.comparables)
    values.push_back(use == ValueChannel::ActualValues ? c.actual_value : c.ai_prediction);
  return {weighted_mean(values, set.similarities), uncertainty_bounds(values),
          Method::ComparablesOnly};
}

}  // namespace cxai
