#include "cxai/baselines.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace cxai {

double LinearModel::evaluate(std::span<const double> x) const {
  if (x.size() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "linear model expects " +
                                                  std::to_string(weights.size()) + " features");
  double y = bias;
  for (std::size_t i = 0; i < x.size(); ++i) y += weights[i] * x[i];
  return y;
}

LinearModel fit_least_squares(std::span<const Vector> xs, std::span<const double> targets,
                              std::span<const double> sample_weights, double ridge) {
  const std::size_t n = xs.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "least squares on zero samples");
  if (targets.size() != n) throw Error(ErrorCode::DimensionMismatch, "one target per sample");
  if (!sample_weights.empty() && sample_weights.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "one weight per sample");
  const std::size_t d = xs[0].size();
  for (const auto& x : xs)
    if (x.size() != d) throw Error(ErrorCode::DimensionMismatch, "ragged design matrix");

  auto weight = [&](std::size_t i) { return sample_weights.empty() ? 1.0 : sample_weights[i]; };
  double total = 0.0;
  Eigen::VectorXd x_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  double y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = weight(i);
    total += s;
    y_mean += s * targets[i];
    for (std::size_t j = 0; j < d; ++j) x_mean[static_cast<Eigen::Index>(j)] += s * xs[i][j];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample weights sum to zero");
  x_mean /= total;
  y_mean /= total;

  // The intercept is left unpenalized by centering; ridge acts on weights only.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  Eigen::VectorXd row(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const double s = weight(i);
    for (std::size_t j = 0; j < d; ++j)
      row[static_cast<Eigen::Index>(j)] = xs[i][j] - x_mean[static_cast<Eigen::Index>(j)];
    gram.noalias() += s * row * row.transpose();
    rhs.noalias() += s * (targets[i] - y_mean) * row;
  }

  LinearModel model;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double emax = eig.eigenvalues().maxCoeff();
  const double emin = eig.eigenvalues().minCoeff();
  model.diagnostics.condition =
      emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity();
  model.diagnostics.regularized = n < d + 1 || !(emin > 1e-10 * std::max(1.0, emax));

  gram.diagonal().array() += ridge;
  const Eigen::VectorXd w = gram.ldlt().solve(rhs);
  model.weights.assign(w.data(), w.data() + w.size());
  model.bias = y_mean - x_mean.dot(w);

  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = targets[i] - model.evaluate(xs[i]);
    sse += weight(i) * r * r;
  }
  model.diagnostics.residual_rmse = std::sqrt(sse / total);
  return model;
}

namespace {
LinearModel fit_set(const ComparableSet& set, bool predictions) {
  set.validate();
  std::vector<double> y;
  y.reserve(set.size());
  for (const auto& c : set.comparables) y.push_back(predictions ? c.ai_prediction : c.actual_value);
  return fit_least_squares(set.comparables_z, y);
}
}  // namespace

LinearModel fit_regression(const ComparableSet& set) { return fit_set(set, false); }

LinearModel fit_regression_on_predictions(const ComparableSet& set) { return fit_set(set, true); }

ReconciledEstimate regression_estimate(const LinearModel& model, std::span<const double> subject,
                                       std::span<const Vector> comparables_z) {
  ReconciledEstimate est;
  est.method = Method::LinearRegression;
  est.point_estimate = model.evaluate(subject);
  std::vector<double> fitted;
  fitted.reserve(comparables_z.size());
  for (const auto& x : comparables_z) fitted.push_back(model.evaluate(x));
  est.bounds = fitted.empty() ? Bounds{est.point_estimate, est.point_estimate}
                              : uncertainty_bounds(fitted);
  return est;
}

LocalLinearModel fit_local_linear(const Predictor& p, const Vector& anchor,
                                  const LocalSamplingOptions& options) {
  const std::size_t d = anchor.size();
  if (d != p.dimension())
    throw Error(ErrorCode::DimensionMismatch, "anchor does not match predictor dimension");
  if (options.samples < d + 1)
    throw Error(ErrorCode::TooFewSamples, "need at least " + std::to_string(d + 1) +
                                              " samples, got " + std::to_string(options.samples));
  if (!(options.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be > 0");

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> offset(-options.radius, options.radius);
  std::vector<Vector> xs(options.samples, anchor);
  std::vector<double> kernel(options.samples);
  const double two_h2 = 2.0 * options.radius * options.radius;
  for (auto& x : xs) {
    for (double& v : x) v += offset(rng);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) d2 += (xs[i][j] - anchor[j]) * (xs[i][j] - anchor[j]);
    kernel[i] = std::exp(-d2 / two_h2);
  }
  const auto y = p.predict(xs);

  LocalLinearModel out;
  out.anchor = anchor;
  out.model = fit_least_squares(xs, y, kernel);
  out.sampling_radius = options.radius;
  out.n_samples = options.samples;
  out.seed = options.seed;
  return out;
}

namespace {

void check_dims(const LocalLinearModel& model, std::span<const double> a, std::span<const double> b,
                std::size_t d) {
  if (model.model.weights.size() != d || a.size() != d || b.size() != d)
    throw Error(ErrorCode::DimensionMismatch, "linear_adjust inputs disagree in dimension");
}

double block_delta(const LocalLinearModel& model, const FeatureBlock& blk,
                   std::span<const double> from, std::span<const double> to) {
  double delta = 0.0;
  for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j)
    delta += model.model.weights[j] * (to[j] - from[j]);
  return delta;
}

double block_change(const FeatureBlock& blk, std::span<const double> from, std::span<const double> to) {
  if (!blk.categorical) return to[blk.offset] - from[blk.offset];
  double l1 = 0.0;
  for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j) l1 += std::abs(to[j] - from[j]);
  return 0.5 * l1;
}

void finish(AdjustmentBreakdown& out, const LocalLinearModel& model, double anchor_value,
            std::span<const double> subject_z) {
  out.total_adjustment = 0.0;
  for (const auto& d : out.deltas) out.total_adjustment += d.money_delta;
  out.adjusted_value = anchor_value + out.total_adjustment;
  out.model_estimate = model.model.evaluate(subject_z);
}

}  // namespace

AdjustmentBreakdown linear_adjust(const LocalLinearModel& model, const Comparable& comparable,
                                  std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const Standardizer& std,
                                  const Instance& subject, Anchoring anchoring) {
  const auto& layout = std.layout();
  check_dims(model, comparable_z, subject_z, layout.dimension());
  AdjustmentBreakdown out;
  for (std::size_t a = 0; a < layout.attribute_count(); ++a) {
    const auto& blk = layout.block(a);
    AttributeAdjustment adj;
    adj.attribute = std.schema().attributes[a].name;
    adj.from = comparable.instance.values.at(a);
    adj.to = subject.values.at(a);
    adj.value_change = block_change(blk, comparable_z, subject_z);
    adj.money_delta = block_delta(model, blk, comparable_z, subject_z);
    out.deltas.push_back(std::move(adj));
  }
  finish(out, model,
         anchoring == Anchoring::ActualValue ? comparable.actual_value : comparable.ai_prediction,
         subject_z);
  return out;
}

AdjustmentBreakdown linear_adjust(const LocalLinearModel& model, double anchor_value,
                                  std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const FeatureLayout& layout) {
  check_dims(model, comparable_z, subject_z, layout.dimension());
  AdjustmentBreakdown out;
  for (std::size_t a = 0; a < layout.attribute_count(); ++a) {
    const auto& blk = layout.block(a);
    AttributeAdjustment adj;
    adj.attribute = "x" + std::to_string(a);
    adj.from = comparable_z[blk.offset];
    adj.to = subject_z[blk.offset];
    adj.value_change = block_change(blk, comparable_z, subject_z);
    adj.money_delta = block_delta(model, blk, comparable_z, subject_z);
    out.deltas.push_back(std::move(adj));
  }
  finish(out, model, anchor_value, subject_z);
  return out;
}

}  // namespace cxai
