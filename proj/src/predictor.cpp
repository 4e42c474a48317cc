#include "cxai/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

void Predictor::check_dimensions(std::span<const Vector> xs) const {
  const std::size_t d = dimension();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i].size() != d)
      throw Error(ErrorCode::DimensionMismatch,
                  "input " + std::to_string(i) + " has " + std::to_string(xs[i].size()) +
                      " components, predictor expects " + std::to_string(d));
}

std::vector<double> Predictor::predict(std::span<const Vector> xs) const {
  check_dimensions(xs);
  if (xs.empty()) return {};
  auto out = predict_batch(xs);
  if (out.size() != xs.size())
    throw Error(ErrorCode::RemoteProtocol, "predictor returned " + std::to_string(out.size()) +
                                               " values for " + std::to_string(xs.size()) +
                                               " inputs");
  return out;
}

double Predictor::predict_one(const Vector& x) const {
  return predict(std::span<const Vector>(&x, 1)).front();
}

std::vector<Vector> Predictor::gradient(std::span<const Vector> xs) const {
  check_dimensions(xs);
  constexpr double h = 1e-4;
  const std::size_t d = dimension();
  std::vector<Vector> probes;
  probes.reserve(xs.size() * 2 * d);
  for (const auto& x : xs) {
    for (std::size_t j = 0; j < d; ++j) {
      Vector plus = x, minus = x;
      plus[j] += h;
      minus[j] -= h;
      probes.push_back(std::move(plus));
      probes.push_back(std::move(minus));
    }
  }
  const auto values = predict(probes);
  std::vector<Vector> grads(xs.size(), Vector(d));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t at = (i * d + j) * 2;
      grads[i][j] = (values[at] - values[at + 1]) / (2.0 * h);
    }
  return grads;
}

// ---------------------------------------------------------------------------

SyntheticPredictor::SyntheticPredictor(Kind kind, std::size_t dims)
    : kind_(kind), weights_(dims, 0.0), a_(dims, 0.0), b_(dims, 0.0), c_(dims, 0.0) {
  if (dims == 0) throw Error(ErrorCode::InvalidArgument, "synthetic predictor needs >= 1 dimension");
}

namespace {
void require_size(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n)
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has the wrong length");
}
}  // namespace

SyntheticPredictor SyntheticPredictor::linear(Vector weights, double bias) {
  SyntheticPredictor p(Kind::Linear, weights.size());
  p.weights_ = std::move(weights);
  p.bias_ = bias;
  return p;
}

SyntheticPredictor SyntheticPredictor::quadratic(Vector curvature, Vector weights, double bias) {
  SyntheticPredictor p(Kind::Quadratic, weights.size());
  require_size(curvature, weights.size(), "curvature");
  p.a_ = std::move(curvature);
  p.weights_ = std::move(weights);
  p.bias_ = bias;
  return p;
}

SyntheticPredictor SyntheticPredictor::sinusoid_plus_linear(Vector amplitude, Vector frequency,
                                                            Vector phase, Vector weights,
                                                            double bias) {
  SyntheticPredictor p(Kind::SinusoidPlusLinear, weights.size());
  require_size(amplitude, weights.size(), "amplitude");
  require_size(frequency, weights.size(), "frequency");
  require_size(phase, weights.size(), "phase");
  p.a_ = std::move(amplitude);
  p.b_ = std::move(frequency);
  p.c_ = std::move(phase);
  p.weights_ = std::move(weights);
  p.bias_ = bias;
  return p;
}

SyntheticPredictor SyntheticPredictor::piecewise_plateau(Vector height, Vector low, Vector high,
                                                         double bias) {
  SyntheticPredictor p(Kind::PiecewisePlateau, height.size());
  require_size(low, height.size(), "low");
  require_size(high, height.size(), "high");
  for (std::size_t r = 0; r < height.size(); ++r)
    if (!(high[r] > low[r])) throw Error(ErrorCode::InvalidArgument, "plateau needs high > low");
  p.a_ = std::move(height);
  p.b_ = std::move(low);
  p.c_ = std::move(high);
  p.bias_ = bias;
  return p;
}

double SyntheticPredictor::value(std::span<const double> x) const {
  double y = bias_;
  for (std::size_t r = 0; r < weights_.size(); ++r) {
    y += weights_[r] * x[r];
    switch (kind_) {
      case Kind::Linear: break;
      case Kind::Quadratic: y += a_[r] * x[r] * x[r]; break;
      case Kind::SinusoidPlusLinear: y += a_[r] * std::sin(b_[r] * x[r] + c_[r]); break;
      case Kind::PiecewisePlateau:
        y += a_[r] * std::clamp((x[r] - b_[r]) / (c_[r] - b_[r]), 0.0, 1.0);
        break;
    }
  }
  return y;
}

std::vector<double> SyntheticPredictor::predict_batch(std::span<const Vector> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(value(x));
  return out;
}

std::vector<Vector> SyntheticPredictor::gradient(std::span<const Vector> xs) const {
  check_dimensions(xs);
  std::vector<Vector> grads;
  grads.reserve(xs.size());
  for (const auto& x : xs) {
    Vector g = weights_;
    for (std::size_t r = 0; r < g.size(); ++r) {
      switch (kind_) {
        case Kind::Linear: break;
        case Kind::Quadratic: g[r] += 2.0 * a_[r] * x[r]; break;
        case Kind::SinusoidPlusLinear: g[r] += a_[r] * b_[r] * std::cos(b_[r] * x[r] + c_[r]); break;
        case Kind::PiecewisePlateau:
          // One-sided at the corners: the slope is taken on the open ramp only.
          if (x[r] > b_[r] && x[r] < c_[r]) g[r] += a_[r] / (c_[r] - b_[r]);
          break;
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

namespace {
const char* kind_name(SyntheticPredictor::Kind k) {
  switch (k) {
    case SyntheticPredictor::Kind::Linear: return "linear";
    case SyntheticPredictor::Kind::Quadratic: return "quadratic";
    case SyntheticPredictor::Kind::SinusoidPlusLinear: return "sinusoid_plus_linear";
    case SyntheticPredictor::Kind::PiecewisePlateau: return "piecewise_plateau";
  }
  return "?";
}
}  // namespace

std::string SyntheticPredictor::description() const {
  std::ostringstream os;
  os << "synthetic:" << kind_name(kind_) << "(d=" << dimension() << ")";
  return os.str();
}

std::string SyntheticPredictor::to_json() const {
  json j{{"kind", kind_name(kind_)}, {"bias", bias_}};
  switch (kind_) {
    case Kind::Linear: j["weights"] = weights_; break;
    case Kind::Quadratic:
      j["weights"] = weights_;
      j["curvature"] = a_;
      break;
    case Kind::SinusoidPlusLinear:
      j["weights"] = weights_;
      j["amplitude"] = a_;
      j["frequency"] = b_;
      j["phase"] = c_;
      break;
    case Kind::PiecewisePlateau:
      j["height"] = a_;
      j["low"] = b_;
      j["high"] = c_;
      break;
  }
  return j.dump();
}

SyntheticPredictor SyntheticPredictor::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    const double bias = j.value("bias", 0.0);
    auto vec = [&](const char* key) { return j.at(key).get<Vector>(); };
    if (kind == "linear") return linear(vec("weights"), bias);
    if (kind == "quadratic") {
      Vector curv = vec("curvature");
      Vector w = j.contains("weights") ? vec("weights") : Vector(curv.size(), 0.0);
      return quadratic(std::move(curv), std::move(w), bias);
    }
    if (kind == "sinusoid_plus_linear") {
      Vector amp = vec("amplitude");
      Vector phase = j.contains("phase") ? vec("phase") : Vector(amp.size(), 0.0);
      Vector w = j.contains("weights") ? vec("weights") : Vector(amp.size(), 0.0);
      return sinusoid_plus_linear(std::move(amp), vec("frequency"), std::move(phase),
                                  std::move(w), bias);
    }
    if (kind == "piecewise_plateau") return piecewise_plateau(vec("height"), vec("low"), vec("high"), bias);
    throw Error(ErrorCode::InvalidArgument, "unknown synthetic kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad synthetic predictor: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

KnnRegressor::KnnRegressor(std::vector<Vector> points, std::vector<double> targets, std::size_t k,
                           FeatureLayout layout)
    : points_(std::move(points)), targets_(std::move(targets)), k_(k), layout_(std::move(layout)) {
  if (points_.size() != targets_.size())
    throw Error(ErrorCode::DimensionMismatch, "one target per training point required");
  if (k_ == 0 || k_ > points_.size())
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k_) + " with " +
                                          std::to_string(points_.size()) + " training rows");
  for (const auto& p : points_)
    if (p.size() != layout_.dimension())
      throw Error(ErrorCode::DimensionMismatch, "training point of the wrong dimension");
}

std::string KnnRegressor::description() const {
  return "knn(k=" + std::to_string(k_) + ", n=" + std::to_string(points_.size()) + ")";
}

void KnnRegressor::nearest(std::span<const double> x,
                           std::vector<std::pair<double, std::size_t>>& dist) const {
  dist.resize(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) dist[i] = {layout_.distance(x, points_[i]), i};
  // Pairs compare by index on equal distance, so ties resolve to row order.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
}

std::vector<double> KnnRegressor::predict_batch(std::span<const Vector> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  std::vector<std::pair<double, std::size_t>> dist;
  for (const auto& x : xs) {
    nearest(x, dist);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < k_; ++j) {
      const double w = 1.0 / (dist[j].first + kEpsilon);
      num += w * targets_[dist[j].second];
      den += w;
    }
    out.push_back(num / den);
  }
  return out;
}

std::vector<Vector> KnnRegressor::gradient(std::span<const Vector> xs) const {
  std::vector<Vector> out;
  out.reserve(xs.size());
  std::vector<std::pair<double, std::size_t>> dist;
  std::vector<double> scale(layout_.dimension(), 1.0);
  for (const auto& b : layout_.blocks())
    if (b.categorical)
      for (std::size_t j = b.offset; j < b.offset + b.width; ++j) scale[j] = 0.5;
  for (const auto& x : xs) {
    if (x.size() != dimension()) throw Error(ErrorCode::DimensionMismatch, "input of the wrong dimension");
    nearest(x, dist);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < k_; ++j) {
      const double w = 1.0 / (dist[j].first + kEpsilon);
      num += w * targets_[dist[j].second];
      den += w;
    }
    const double y = num / den;
    Vector g(x.size(), 0.0);
    for (std::size_t j = 0; j < k_; ++j) {
      const double w = 1.0 / (dist[j].first + kEpsilon);
      const double c = -(targets_[dist[j].second] - y) / den * w * w;
      const auto& p = points_[dist[j].second];
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - p[i];
        g[i] += c * scale[i] * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

KnnRegressor fit_knn(const Dataset& dataset, const Standardizer& std, std::size_t k) {
  if (k == 0 || k > dataset.size())
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " with " +
                                          std::to_string(dataset.size()) + " rows");
  std::vector<Vector> points;
  std::vector<double> targets;
  points.reserve(dataset.size());
  for (const auto& row : dataset.rows) {
    points.push_back(std.standardize(row.instance));
    targets.push_back(row.actual_value);
  }
  return KnnRegressor(std::move(points), std::move(targets), k, std.layout());
}

// ---------------------------------------------------------------------------

RemotePredictor::RemotePredictor(std::string url, std::size_t dimension, RemoteOptions options)
    : url_(std::move(url)), dimension_(dimension), options_(options) {
  const std::string scheme = "http://";
  if (url_.rfind(scheme, 0) != 0)
    throw Error(ErrorCode::InvalidArgument, "remote predictor URL must start with http://");
  const auto slash = url_.find('/', scheme.size());
  host_ = slash == std::string::npos ? url_ : url_.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url_.substr(slash);
  if (host_.size() == scheme.size()) throw Error(ErrorCode::InvalidArgument, "URL has no host");
  if (options_.retries < 0) throw Error(ErrorCode::InvalidArgument, "negative retry budget");
}

std::vector<double> RemotePredictor::predict_batch(std::span<const Vector> xs) const {
  json body{{"inputs", json::array()}};
  for (const auto& x : xs) body["inputs"].push_back(x);
  const std::string payload = body.dump();

  std::string last_failure;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client client(host_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::RemoteProtocol, url_ + " answered HTTP " + std::to_string(res->status));
    try {
      const json doc = json::parse(res->body);
      auto preds = doc.at("predictions").get<std::vector<double>>();
      if (preds.size() != xs.size())
        throw Error(ErrorCode::RemoteProtocol, "expected " + std::to_string(xs.size()) +
                                                   " predictions, got " +
                                                   std::to_string(preds.size()));
      for (double p : preds)
        if (!std::isfinite(p)) throw Error(ErrorCode::RemoteProtocol, "non-finite prediction");
      return preds;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::RemoteProtocol, std::string("malformed response: ") + e.what());
    }
  }
  throw Error(ErrorCode::RemoteUnavailable,
              url_ + " after " + std::to_string(options_.retries + 1) + " attempts: " + last_failure);
}

}  // namespace cxai
