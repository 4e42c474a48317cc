#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cxai/baselines.hpp"
#include "cxai/comparables.hpp"
#include "cxai/predictor.hpp"
#include "cxai/schema.hpp"

namespace cxai {

/// Weights of the five desiderata and the optimizer settings for one trace.
struct DesiderataConfig {
  double lambda_f = 1.0;   // faithfulness
  double lambda_s = 10.0;  // sparsity
  double lambda_d = 10.0;  // disjointness
  double lambda_m = 1.0;   // monotonicity
  double lambda_e = 1.0;   // evenness
  /// Attribute-change threshold in standardized units.
  double delta = 0.01;
  /// Segment count; 0 picks the number of attributes that differ by more
  /// than `delta`, capped at kMaxAutoSegments.
  std::size_t segments = 0;
  std::size_t samples_per_segment = 8;
  std::size_t max_epochs = 2000;
  double learning_rate = 0.8;
  double init_std = 0.1;
  std::uint64_t seed = 0;
  /// Plateau schedule: halve the rate after `patience` epochs without a new
  /// best loss; stop once `max_lr_reductions` halvings have not helped.
  std::size_t patience = 50;
  std::size_t max_lr_reductions = 10;

  static constexpr std::size_t kMaxAutoSegments = 8;

  /// InvalidArgument on lambda_f <= 0, negative weights or zero counts.
  void validate() const;
  /// Stable 64-bit digest of every field, used as a cache key.
  std::uint64_t digest() const;
};

/// Every field as a flat JSON object keyed by field name.
std::string config_to_json(const DesiderataConfig& cfg);
/// Copies the fields present in a JSON object onto `cfg`. InvalidArgument on
/// unknown keys or ill-typed values; the result is not validated.
void apply_config_overrides(DesiderataConfig& cfg, const std::string& json_object);

/// Piecewise-linear counterfactual path from a comparable to the subject.
///
/// Segment tau (1-based) spans knots chi_{tau-1}..chi_tau and carries weights
/// w_tau. Only b_1 is stored; every later bias follows from continuity, and
/// segments are evaluated in knot-anchored form so adjacent segments agree
/// bit-for-bit at their shared knot. Values are in standardized target units.
class TraceModel {
 public:
  TraceModel(Vector comparable_z, Vector subject_z, std::vector<Vector> interior_knots,
             std::vector<Vector> weights, double base_bias, FeatureLayout layout,
             NumericStats target = {});

  std::size_t segments() const { return weights_.size(); }
  std::size_t dimension() const { return knots_.front().size(); }
  const std::vector<Vector>& knots() const { return knots_; }
  const std::vector<Vector>& weights() const { return weights_; }
  double base_bias() const { return base_bias_; }
  const FeatureLayout& layout() const { return layout_; }
  const NumericStats& target() const { return target_; }

  /// b_tau for 1 <= tau <= T from b_1 and the knots.
  double bias(std::size_t tau) const;
  /// Trace value at knot chi_tau, 0 <= tau <= T.
  double knot_value(std::size_t tau) const { return knot_values_.at(tau); }
  /// Value of segment tau's affine function at x.
  double segment_value(std::size_t tau, std::span<const double> x) const;
  /// dy_tau = y_tau(chi_tau) - y_tau(chi_{tau-1}) for every segment.
  std::vector<double> segment_deltas() const;

  /// Position and value at arc parameter t in [0, 1]; knots sit at tau / T.
  Vector point_at(double t) const;
  double value_at(double t) const;
  /// Value at a point on the polyline. OutOfDomain when x is off the path.
  double evaluate(std::span<const double> x) const;

  /// Per-attribute coordinate of knot tau: the z-score for numeric attributes
  /// and the relaxation weight toward the subject's level for categorical ones.
  Vector attribute_coordinates(std::size_t tau) const;

  /// Trace value converted to target units.
  double to_target(double v) const { return target_.mean + target_.std * v; }
  /// Value change from comparable to subject, in target units.
  double total_delta() const;

 private:
  std::vector<Vector> knots_;
  std::vector<Vector> weights_;
  double base_bias_;
  FeatureLayout layout_;
  NumericStats target_;
  std::vector<double> knot_values_;
};

/// Exact desiderata values of a trace (discrete definitions, threshold delta).
struct LossBreakdown {
  double total = 0.0;
  double faithfulness = 0.0;  // mean |f(x) - y(x)| over the sampled points
  double sparsity = 0.0;
  double disjointness = 0.0;
  double monotonicity = 0.0;
  double evenness = 0.0;
  std::vector<int> change_counts;  // n^(r) per attribute
  int adjustments = 0;             // sum of change_counts
  int reversals = 0;
  std::vector<double> segment_deltas;
  double mean_delta = 0.0;
  /// Population variance of the segment deltas.
  double unevenness = 0.0;
};

/// Points where faithfulness is checked: `per_segment` interior points per
/// segment followed by every knot, as (segment, position) pairs.
struct SamplePoint {
  std::size_t segment;  // 1-based; 0 marks a knot
  double position;      // fraction along the segment, or knot index
};
std::vector<SamplePoint> faithfulness_samples(std::size_t segments, std::size_t per_segment);

LossBreakdown loss(const TraceModel& m, const Predictor& p, const DesiderataConfig& cfg);

/// Discrete counts for stored knots: (per-attribute change counts, reversals).
LossBreakdown desiderata_counts(const TraceModel& m, double delta);

/// The smooth training objective over the packed free parameters:
/// interior knot attribute coordinates, segment weights, and b_1.
class TraceObjective {
 public:
  TraceObjective(const Predictor& p, Vector comparable_z, Vector subject_z, FeatureLayout layout,
                 DesiderataConfig cfg, NumericStats target, std::size_t segments);

  std::size_t parameter_count() const;
  /// Leading entries of theta that hold interior knot coordinates.
  std::size_t knot_parameter_count() const { return (segments_ - 1) * free_.size(); }
  std::size_t segments() const { return segments_; }
  std::vector<double> pack(const TraceModel& m) const;
  TraceModel unpack(std::span<const double> theta) const;
  /// Keeps categorical relaxation weights inside [0, 1].
  void project(std::span<double> theta) const;

  double value(std::span<const double> theta) const;
  double value_and_gradient(std::span<const double> theta, std::span<double> grad) const;

 private:
  struct FreeCoordinate {
    std::size_t attribute;
    bool categorical;
  };
  double evaluate(std::span<const double> theta, std::span<double> grad) const;
  std::vector<Vector> knots_from(std::span<const double> theta) const;
  std::vector<Vector> coords_from(std::span<const double> theta) const;

  const Predictor& predictor_;
  Vector comparable_z_;
  Vector subject_z_;
  FeatureLayout layout_;
  DesiderataConfig cfg_;
  NumericStats target_;
  std::size_t segments_;
  std::vector<FreeCoordinate> free_;
  Vector start_coords_;
  Vector end_coords_;
};

/// Segment count used when cfg.segments == 0.
std::size_t default_segments(const FeatureLayout& layout, std::span<const double> comparable_z,
                             std::span<const double> subject_z, double delta);

struct TraceFit {
  TraceModel model;
  LossBreakdown loss;
  std::size_t epochs = 0;
  double final_learning_rate = 0.0;
};

/// Trains one trace with Adam on the desiderata-regularized loss and returns
/// the best iterate. NoDifference when comparable and subject coincide,
/// Diverged on a non-finite loss.
TraceFit fit_trace(const Predictor& p, std::span<const double> comparable_z,
                   std::span<const double> subject_z, const DesiderataConfig& cfg,
                   const FeatureLayout& layout, NumericStats target = {});
/// Numeric-only convenience overload.
TraceFit fit_trace(const Predictor& p, std::span<const double> comparable_z,
                   std::span<const double> subject_z, const DesiderataConfig& cfg);

struct AttributeChange {
  std::string attribute;
  AttributeValue from;
  AttributeValue to;
};

struct TraceStep {
  std::vector<AttributeChange> changed_attributes;
  double money_delta = 0.0;    // target units
  double running_value = 0.0;  // anchored value after this step
  Instance state;              // attribute values after this step
};

struct TraceSteps {
  std::vector<TraceStep> steps;
  double anchor_value = 0.0;
  double final_adjusted_value = 0.0;
};

/// One step per segment. Changes of at most `delta` are reported as none; a
/// categorical attribute switches level in the step where its relaxation
/// weight crosses 0.5. The last state is the subject exactly.
TraceSteps extract_steps(const TraceModel& m, const Comparable& comparable, const Instance& subject,
                         const Standardizer& std, double delta,
                         Anchoring anchoring = Anchoring::ActualValue);

/// Comparable's actual value plus the trace's total change.
double trace_adjusted_value(const TraceModel& m, const Comparable& comparable,
                            Anchoring anchoring = Anchoring::ActualValue);

/// Similarity-weighted reconciliation of the adjusted values; bounds are their
/// min/max.
ReconciledEstimate trace_adjusted_estimate(std::span<const TraceModel> traces,
                                           const ComparableSet& set);

/// Versioned JSON document (format "cxai.trace", version 1).
std::string trace_to_json(const TraceModel& m, const DesiderataConfig* cfg = nullptr,
                          const LossBreakdown* loss = nullptr);
TraceModel trace_from_json(const std::string& text);

}  // namespace cxai
