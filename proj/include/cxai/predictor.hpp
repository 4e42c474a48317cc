#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cxai/schema.hpp"

namespace cxai {

/// Black-box regression model f over encoded vectors.
///
/// Implementations must be deterministic and safe to call concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::string description() const = 0;

  /// One prediction per input, in input order. DimensionMismatch when any
  /// vector has the wrong length.
  std::vector<double> predict(std::span<const Vector> xs) const;
  double predict_one(const Vector& x) const;

  /// Input gradient at every point. The default uses batched central
  /// differences through predict(); closed-form models override it.
  virtual std::vector<Vector> gradient(std::span<const Vector> xs) const;

 protected:
  virtual std::vector<double> predict_batch(std::span<const Vector> xs) const = 0;
  void check_dimensions(std::span<const Vector> xs) const;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

/// Closed-form stand-ins for trained models, all over standardized inputs.
class SyntheticPredictor final : public Predictor {
 public:
  enum class Kind { Linear, Quadratic, SinusoidPlusLinear, PiecewisePlateau };

  /// f(x) = w.x + b
  static SyntheticPredictor linear(Vector weights, double bias);
  /// f(x) = sum_r a_r x_r^2 + w.x + b
  static SyntheticPredictor quadratic(Vector curvature, Vector weights, double bias);
  /// f(x) = sum_r amp_r sin(freq_r x_r + phase_r) + w.x + b
  static SyntheticPredictor sinusoid_plus_linear(Vector amplitude, Vector frequency, Vector phase,
                                                 Vector weights, double bias);
  /// f(x) = sum_r h_r clamp((x_r - lo_r) / (hi_r - lo_r), 0, 1) + b
  static SyntheticPredictor piecewise_plateau(Vector height, Vector low, Vector high, double bias);

  Kind kind() const { return kind_; }
  std::size_t dimension() const override { return weights_.size(); }
  std::string description() const override;
  std::vector<Vector> gradient(std::span<const Vector> xs) const override;

  double value(std::span<const double> x) const;
  /// Parameters as a JSON object; round-trips through from_json.
  std::string to_json() const;
  static SyntheticPredictor from_json(const std::string& text);

 protected:
  std::vector<double> predict_batch(std::span<const Vector> xs) const override;

 private:
  SyntheticPredictor(Kind kind, std::size_t dims);

  Kind kind_;
  Vector weights_;
  Vector a_;  // curvature | amplitude | plateau height
  Vector b_;  // frequency | plateau low
  Vector c_;  // phase | plateau high
  double bias_ = 0.0;
};

/// Inverse-distance-weighted k-NN regressor in standardized Manhattan space.
class KnnRegressor final : public Predictor {
 public:
  static constexpr double kEpsilon = 1e-6;

  KnnRegressor(std::vector<Vector> points, std::vector<double> targets, std::size_t k,
               FeatureLayout layout);

  std::size_t dimension() const override { return layout_.dimension(); }
  std::string description() const override;
  std::size_t k() const { return k_; }
  /// Exact gradient for the current neighbour set (piecewise smooth).
  std::vector<Vector> gradient(std::span<const Vector> xs) const override;

 protected:
  std::vector<double> predict_batch(std::span<const Vector> xs) const override;

 private:
  void nearest(std::span<const double> x, std::vector<std::pair<double, std::size_t>>& dist) const;

  std::vector<Vector> points_;
  std::vector<double> targets_;
  std::size_t k_;
  FeatureLayout layout_;
};

/// KTooLarge when k exceeds the dataset size (or is zero).
KnnRegressor fit_knn(const Dataset& dataset, const Standardizer& std, std::size_t k);

struct RemoteOptions {
  std::chrono::milliseconds timeout{10000};
  int retries = 2;
};

/// Client for an external model service:
///   POST <url>  {"inputs": [[...], ...]}  ->  {"predictions": [...]}
/// Only transport failures and 5xx responses are retried.
class RemotePredictor final : public Predictor {
 public:
  RemotePredictor(std::string url, std::size_t dimension, RemoteOptions options = {});

  std::size_t dimension() const override { return dimension_; }
  std::string description() const override { return "remote(" + url_ + ")"; }
  const std::string& url() const { return url_; }

 protected:
  std::vector<double> predict_batch(std::span<const Vector> xs) const override;

 private:
  std::string url_;
  std::string host_;  // scheme://host:port
  std::string path_;
  std::size_t dimension_;
  RemoteOptions options_;
};

/// Environment variable naming the remote model endpoint.
inline constexpr const char* kPredictorUrlEnv = "COMPARABLES_PREDICTOR_URL";

}  // namespace cxai
