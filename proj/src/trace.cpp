#include "cxai/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

namespace {

// w . (x - a); every knot value and segment evaluation goes through here so
// the arithmetic at a shared knot is identical on both sides.
double dot_offset(std::span<const double> w, std::span<const double> x, std::span<const double> a) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * (x[i] - a[i]);
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kLseTemperature = 0.1;
constexpr double kSigmoidWidth = 0.1;  // fraction of delta

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Relaxation weight of a one-hot block between its endpoint encodings.
double block_alpha(const FeatureBlock& blk, std::span<const double> x, std::span<const double> start,
                   std::span<const double> end) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j) {
    const double dir = end[j] - start[j];
    num += (x[j] - start[j]) * dir;
    den += dir * dir;
  }
  return den > 0.0 ? num / den : 0.0;
}

bool block_differs(const FeatureBlock& blk, std::span<const double> a, std::span<const double> b) {
  for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j)
    if (a[j] != b[j]) return true;
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------

void DesiderataConfig::validate() const {
  if (!(lambda_f > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_f must be > 0");
  for (double l : {lambda_s, lambda_d, lambda_m, lambda_e})
    if (!(l >= 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::InvalidArgument, "desiderata weights must be finite and >= 0");
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be > 0");
  if (samples_per_segment == 0) throw Error(ErrorCode::InvalidArgument, "samples_per_segment must be > 0");
  if (max_epochs == 0) throw Error(ErrorCode::InvalidArgument, "max_epochs must be > 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(init_std >= 0.0)) throw Error(ErrorCode::InvalidArgument, "init_std must be >= 0");
  if (patience == 0) throw Error(ErrorCode::InvalidArgument, "patience must be > 0");
}

std::uint64_t DesiderataConfig::digest() const {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  auto mixd = [&mix](double d) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof bits);
    mix(bits);
  };
  for (double d : {lambda_f, lambda_s, lambda_d, lambda_m, lambda_e, delta, learning_rate, init_std})
    mixd(d);
  for (std::uint64_t v : {static_cast<std::uint64_t>(segments), static_cast<std::uint64_t>(samples_per_segment),
                          static_cast<std::uint64_t>(max_epochs), seed, static_cast<std::uint64_t>(patience),
                          static_cast<std::uint64_t>(max_lr_reductions)})
    mix(v);
  return h;
}

// ---------------------------------------------------------------------------

TraceModel::TraceModel(Vector comparable_z, Vector subject_z, std::vector<Vector> interior_knots,
                       std::vector<Vector> weights, double base_bias, FeatureLayout layout,
                       NumericStats target)
    : weights_(std::move(weights)), base_bias_(base_bias), layout_(std::move(layout)), target_(target) {
  const std::size_t d = comparable_z.size();
  if (subject_z.size() != d || layout_.dimension() != d)
    throw Error(ErrorCode::DimensionMismatch, "trace endpoints/layout disagree in dimension");
  if (weights_.empty()) throw Error(ErrorCode::InvalidArgument, "trace needs at least one segment");
  if (interior_knots.size() + 1 != weights_.size())
    throw Error(ErrorCode::InvalidArgument, "T segments need T-1 interior knots");
  for (const auto& k : interior_knots)
    if (k.size() != d) throw Error(ErrorCode::DimensionMismatch, "knot of the wrong dimension");
  for (const auto& w : weights_)
    if (w.size() != d) throw Error(ErrorCode::DimensionMismatch, "weights of the wrong dimension");
  if (!(target_.std > 0.0)) throw Error(ErrorCode::InvalidArgument, "target scale must be > 0");

  knots_.reserve(weights_.size() + 1);
  knots_.push_back(std::move(comparable_z));
  for (auto& k : interior_knots) knots_.push_back(std::move(k));
  knots_.push_back(std::move(subject_z));

  knot_values_.resize(knots_.size());
  knot_values_[0] = dot(weights_[0], knots_[0]) + base_bias_;
  for (std::size_t tau = 1; tau < knots_.size(); ++tau)
    knot_values_[tau] = knot_values_[tau - 1] + dot_offset(weights_[tau - 1], knots_[tau], knots_[tau - 1]);
}

double TraceModel::bias(std::size_t tau) const {
  if (tau < 1 || tau > segments()) throw Error(ErrorCode::InvalidArgument, "segment index out of range");
  double b = base_bias_;
  for (std::size_t t = 1; t < tau; ++t) {
    const auto& wt = weights_[t - 1];
    const auto& wn = weights_[t];
    for (std::size_t i = 0; i < wt.size(); ++i) b += (wt[i] - wn[i]) * knots_[t][i];
  }
  return b;
}

double TraceModel::segment_value(std::size_t tau, std::span<const double> x) const {
  if (tau < 1 || tau > segments()) throw Error(ErrorCode::InvalidArgument, "segment index out of range");
  if (x.size() != dimension()) throw Error(ErrorCode::DimensionMismatch, "point of the wrong dimension");
  return knot_values_[tau - 1] + dot_offset(weights_[tau - 1], x, knots_[tau - 1]);
}

std::vector<double> TraceModel::segment_deltas() const {
  std::vector<double> out(segments());
  for (std::size_t tau = 1; tau <= segments(); ++tau) out[tau - 1] = knot_values_[tau] - knot_values_[tau - 1];
  return out;
}

namespace {
std::pair<std::size_t, double> locate(double t, std::size_t segments) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::OutOfDomain, "arc parameter outside [0, 1]");
  const double scaled = t * static_cast<double>(segments);
  std::size_t tau = std::min<std::size_t>(segments, static_cast<std::size_t>(scaled) + 1);
  return {tau, scaled - static_cast<double>(tau - 1)};
}
}  // namespace

Vector TraceModel::point_at(double t) const {
  auto [tau, s] = locate(t, segments());
  if (s == 0.0) return knots_[tau - 1];
  if (s == 1.0) return knots_[tau];
  Vector x(dimension());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = knots_[tau - 1][i] + s * (knots_[tau][i] - knots_[tau - 1][i]);
  return x;
}

double TraceModel::value_at(double t) const {
  auto [tau, s] = locate(t, segments());
  if (s == 0.0) return knot_values_[tau - 1];
  if (s == 1.0) return knot_values_[tau];
  return segment_value(tau, point_at(t));
}

double TraceModel::evaluate(std::span<const double> x) const {
  if (x.size() != dimension()) throw Error(ErrorCode::DimensionMismatch, "point of the wrong dimension");
  double scale = 1.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  const double tol = 1e-9 * scale;
  for (std::size_t tau = 1; tau <= segments(); ++tau) {
    const auto& a = knots_[tau - 1];
    const auto& b = knots_[tau];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (x[i] - a[i]) * (b[i] - a[i]);
      den += (b[i] - a[i]) * (b[i] - a[i]);
    }
    const double s = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
    double off = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      off = std::max(off, std::abs(x[i] - (a[i] + s * (b[i] - a[i]))));
    if (off <= tol) return segment_value(tau, x);
  }
  throw Error(ErrorCode::OutOfDomain, "point does not lie on the trace");
}

Vector TraceModel::attribute_coordinates(std::size_t tau) const {
  const auto& x = knots_.at(tau);
  Vector u(layout_.attribute_count(), 0.0);
  for (std::size_t a = 0; a < u.size(); ++a) {
    const auto& blk = layout_.block(a);
    u[a] = blk.categorical ? block_alpha(blk, x, knots_.front(), knots_.back()) : x[blk.offset];
  }
  return u;
}

double TraceModel::total_delta() const {
  double total = 0.0;
  for (double d : segment_deltas()) total += d * target_.std;
  return total;
}

// ---------------------------------------------------------------------------

std::vector<SamplePoint> faithfulness_samples(std::size_t segments, std::size_t per_segment) {
  std::vector<SamplePoint> pts;
  pts.reserve(segments * per_segment + segments + 1);
  for (std::size_t tau = 1; tau <= segments; ++tau)
    for (std::size_t j = 1; j <= per_segment; ++j)
      pts.push_back({tau, static_cast<double>(j) / static_cast<double>(per_segment + 1)});
  for (std::size_t k = 0; k <= segments; ++k) pts.push_back({0, static_cast<double>(k)});
  return pts;
}

namespace {

struct Counts {
  std::vector<int> change_counts;
  int reversals = 0;
};

// Change counts and direction reversals over attribute coordinates `u` and
// segment deltas `g`, both thresholded at delta.
Counts count_changes(const std::vector<Vector>& u, std::span<const double> g, double delta) {
  Counts c;
  const std::size_t attrs = u.front().size();
  c.change_counts.assign(attrs, 0);
  for (std::size_t r = 0; r < attrs; ++r) {
    double last_dir = 0.0;
    for (std::size_t tau = 1; tau < u.size(); ++tau) {
      const double d = u[tau][r] - u[tau - 1][r];
      if (std::abs(d) <= delta) continue;
      ++c.change_counts[r];
      if (last_dir != 0.0 && sign(d) != last_dir) ++c.reversals;
      last_dir = sign(d);
    }
  }
  double last_dir = 0.0;
  for (double d : g) {
    if (std::abs(d) <= delta) continue;
    if (last_dir != 0.0 && sign(d) != last_dir) ++c.reversals;
    last_dir = sign(d);
  }
  return c;
}

struct ShapeTerms {
  double sparsity = 0.0;
  double disjointness = 0.0;
  double monotonicity = 0.0;
  double evenness = 0.0;
  double mean_delta = 0.0;
};

// Exact L_S, L_D, L_M, L_E.
ShapeTerms shape_terms(const std::vector<Vector>& u, std::span<const double> g, double delta) {
  ShapeTerms s;
  const std::size_t T = g.size();
  const std::size_t attrs = u.front().size();
  std::vector<int> n(attrs, 0);
  for (std::size_t tau = 1; tau <= T; ++tau)
    for (std::size_t r = 0; r < attrs; ++r) {
      const double d = u[tau][r] - u[tau - 1][r];
      s.sparsity += std::abs(d);
      if (std::abs(d) > delta) ++n[r];
    }
  s.disjointness = attrs ? *std::max_element(n.begin(), n.end()) : 0;
  for (std::size_t tau = 2; tau <= T; ++tau) {
    for (std::size_t r = 0; r < attrs; ++r) {
      const double prod = (u[tau][r] - u[tau - 1][r]) * (u[tau - 1][r] - u[tau - 2][r]);
      s.monotonicity += std::max(0.0, -prod);
    }
    s.monotonicity += std::max(0.0, -g[tau - 1] * g[tau - 2]);
  }
  for (double d : g) s.mean_delta += d;
  s.mean_delta /= static_cast<double>(T);
  for (double d : g) s.evenness += (d - s.mean_delta) * (d - s.mean_delta);
  return s;
}

std::vector<Vector> all_coordinates(const TraceModel& m) {
  std::vector<Vector> u;
  for (std::size_t tau = 0; tau <= m.segments(); ++tau) u.push_back(m.attribute_coordinates(tau));
  return u;
}

}  // namespace

LossBreakdown desiderata_counts(const TraceModel& m, double delta) {
  const auto u = all_coordinates(m);
  const auto g = m.segment_deltas();
  const auto terms = shape_terms(u, g, delta);
  const auto counts = count_changes(u, g, delta);
  LossBreakdown out;
  out.sparsity = terms.sparsity;
  out.disjointness = terms.disjointness;
  out.monotonicity = terms.monotonicity;
  out.evenness = terms.evenness;
  out.change_counts = counts.change_counts;
  for (int c : counts.change_counts) out.adjustments += c;
  out.reversals = counts.reversals;
  out.segment_deltas = g;
  out.mean_delta = terms.mean_delta;
  out.unevenness = terms.evenness / static_cast<double>(g.size());
  return out;
}

LossBreakdown loss(const TraceModel& m, const Predictor& p, const DesiderataConfig& cfg) {
  cfg.validate();
  if (p.dimension() != m.dimension())
    throw Error(ErrorCode::DimensionMismatch, "predictor and trace disagree in dimension");
  LossBreakdown out = desiderata_counts(m, cfg.delta);

  const auto samples = faithfulness_samples(m.segments(), cfg.samples_per_segment);
  std::vector<Vector> xs;
  std::vector<double> ys;
  xs.reserve(samples.size());
  for (const auto& sp : samples) {
    if (sp.segment == 0) {
      const auto k = static_cast<std::size_t>(sp.position);
      xs.push_back(m.knots()[k]);
      ys.push_back(m.knot_value(k));
    } else {
      const auto& a = m.knots()[sp.segment - 1];
      const auto& b = m.knots()[sp.segment];
      Vector x(a.size());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = a[i] + sp.position * (b[i] - a[i]);
      ys.push_back(m.segment_value(sp.segment, x));
      xs.push_back(std::move(x));
    }
  }
  const auto preds = p.predict(xs);
  double lf = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    lf += std::abs((preds[i] - m.target().mean) / m.target().std - ys[i]);
  out.faithfulness = lf / static_cast<double>(preds.size());
  out.total = cfg.lambda_f * out.faithfulness + cfg.lambda_s * out.sparsity +
              cfg.lambda_d * out.disjointness + cfg.lambda_m * out.monotonicity +
              cfg.lambda_e * out.evenness;
  return out;
}

// ---------------------------------------------------------------------------

TraceObjective::TraceObjective(const Predictor& p, Vector comparable_z, Vector subject_z,
                               FeatureLayout layout, DesiderataConfig cfg, NumericStats target,
                               std::size_t segments)
    : predictor_(p),
      comparable_z_(std::move(comparable_z)),
      subject_z_(std::move(subject_z)),
      layout_(std::move(layout)),
      cfg_(cfg),
      target_(target),
      segments_(segments) {
  cfg_.validate();
  if (segments_ == 0) throw Error(ErrorCode::InvalidArgument, "trace needs at least one segment");
  const std::size_t d = layout_.dimension();
  if (comparable_z_.size() != d || subject_z_.size() != d || p.dimension() != d)
    throw Error(ErrorCode::DimensionMismatch, "trace inputs disagree in dimension");
  start_coords_.assign(layout_.attribute_count(), 0.0);
  end_coords_.assign(layout_.attribute_count(), 0.0);
  for (std::size_t a = 0; a < layout_.attribute_count(); ++a) {
    const auto& blk = layout_.block(a);
    if (!blk.categorical) {
      free_.push_back({a, false});
      start_coords_[a] = comparable_z_[blk.offset];
      end_coords_[a] = subject_z_[blk.offset];
    } else if (block_differs(blk, comparable_z_, subject_z_)) {
      free_.push_back({a, true});
      end_coords_[a] = 1.0;
    }
  }
}

std::size_t TraceObjective::parameter_count() const {
  return (segments_ - 1) * free_.size() + segments_ * layout_.dimension() + 1;
}

std::vector<Vector> TraceObjective::coords_from(std::span<const double> theta) const {
  std::vector<Vector> u(segments_ + 1);
  u.front() = start_coords_;
  u.back() = end_coords_;
  for (std::size_t tau = 1; tau < segments_; ++tau) {
    u[tau] = start_coords_;
    for (std::size_t f = 0; f < free_.size(); ++f)
      u[tau][free_[f].attribute] = theta[(tau - 1) * free_.size() + f];
  }
  return u;
}

std::vector<Vector> TraceObjective::knots_from(std::span<const double> theta) const {
  std::vector<Vector> knots(segments_ + 1);
  knots.front() = comparable_z_;
  knots.back() = subject_z_;
  for (std::size_t tau = 1; tau < segments_; ++tau) {
    Vector x = comparable_z_;
    for (std::size_t f = 0; f < free_.size(); ++f) {
      const double v = theta[(tau - 1) * free_.size() + f];
      const auto& blk = layout_.block(free_[f].attribute);
      if (!free_[f].categorical) {
        x[blk.offset] = v;
      } else {
        for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j)
          x[j] = comparable_z_[j] + v * (subject_z_[j] - comparable_z_[j]);
      }
    }
    knots[tau] = std::move(x);
  }
  return knots;
}

std::vector<double> TraceObjective::pack(const TraceModel& m) const {
  if (m.segments() != segments_ || m.dimension() != layout_.dimension())
    throw Error(ErrorCode::DimensionMismatch, "trace does not match this objective");
  std::vector<double> theta;
  theta.reserve(parameter_count());
  for (std::size_t tau = 1; tau < segments_; ++tau) {
    const auto u = m.attribute_coordinates(tau);
    for (const auto& f : free_) theta.push_back(u[f.attribute]);
  }
  for (const auto& w : m.weights()) theta.insert(theta.end(), w.begin(), w.end());
  theta.push_back(m.base_bias());
  return theta;
}

TraceModel TraceObjective::unpack(std::span<const double> theta) const {
  if (theta.size() != parameter_count())
    throw Error(ErrorCode::DimensionMismatch, "parameter vector of the wrong length");
  auto knots = knots_from(theta);
  std::vector<Vector> interior(knots.begin() + 1, knots.end() - 1);
  const std::size_t d = layout_.dimension();
  const std::size_t off = (segments_ - 1) * free_.size();
  std::vector<Vector> weights(segments_);
  for (std::size_t tau = 0; tau < segments_; ++tau)
    weights[tau].assign(theta.begin() + static_cast<std::ptrdiff_t>(off + tau * d),
                        theta.begin() + static_cast<std::ptrdiff_t>(off + (tau + 1) * d));
  return TraceModel(comparable_z_, subject_z_, std::move(interior), std::move(weights), theta.back(),
                    layout_, target_);
}

void TraceObjective::project(std::span<double> theta) const {
  for (std::size_t tau = 1; tau < segments_; ++tau)
    for (std::size_t f = 0; f < free_.size(); ++f)
      if (free_[f].categorical) {
        double& v = theta[(tau - 1) * free_.size() + f];
        v = std::clamp(v, 0.0, 1.0);
      }
}

double TraceObjective::value(std::span<const double> theta) const { return evaluate(theta, {}); }

double TraceObjective::value_and_gradient(std::span<const double> theta, std::span<double> grad) const {
  if (grad.size() != parameter_count())
    throw Error(ErrorCode::DimensionMismatch, "gradient buffer of the wrong length");
  return evaluate(theta, grad);
}

double TraceObjective::evaluate(std::span<const double> theta, std::span<double> grad) const {
  if (theta.size() != parameter_count())
    throw Error(ErrorCode::DimensionMismatch, "parameter vector of the wrong length");
  const bool want_grad = !grad.empty();
  const std::size_t T = segments_;
  const std::size_t D = layout_.dimension();
  const std::size_t A = layout_.attribute_count();
  const std::size_t F = free_.size();
  const std::size_t w_off = (T - 1) * F;

  const auto knots = knots_from(theta);
  const auto u = coords_from(theta);
  auto weight = [&](std::size_t tau) {  // 1-based
    return std::span<const double>(theta.data() + w_off + (tau - 1) * D, D);
  };
  const double b1 = theta.back();

  // Forward pass.
  std::vector<Vector> step(T + 1);  // step[tau] = chi_tau - chi_{tau-1}
  std::vector<double> g(T + 1, 0.0), v(T + 1, 0.0);
  v[0] = dot(weight(1), knots[0]) + b1;
  for (std::size_t tau = 1; tau <= T; ++tau) {
    step[tau].resize(D);
    for (std::size_t i = 0; i < D; ++i) step[tau][i] = knots[tau][i] - knots[tau - 1][i];
    g[tau] = dot(weight(tau), step[tau]);
    v[tau] = v[tau - 1] + g[tau];
  }

  const auto samples = faithfulness_samples(T, cfg_.samples_per_segment);
  std::vector<Vector> xs;
  std::vector<double> ytilde;
  xs.reserve(samples.size());
  for (const auto& sp : samples) {
    if (sp.segment == 0) {
      const auto k = static_cast<std::size_t>(sp.position);
      xs.push_back(knots[k]);
      ytilde.push_back(v[k]);
    } else {
      Vector x(D);
      for (std::size_t i = 0; i < D; ++i) x[i] = knots[sp.segment - 1][i] + sp.position * step[sp.segment][i];
      xs.push_back(std::move(x));
      ytilde.push_back(v[sp.segment - 1] + sp.position * g[sp.segment]);
    }
  }
  const auto preds = predictor_.predict(xs);
  const double N = static_cast<double>(xs.size());
  double lf = 0.0;
  std::vector<double> resid(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    resid[i] = (preds[i] - target_.mean) / target_.std - ytilde[i];
    lf += std::abs(resid[i]);
  }
  lf /= N;

  // Shape terms on attribute coordinates.
  double ls = 0.0, lm = 0.0, le = 0.0;
  const double kappa = kSigmoidWidth * cfg_.delta;
  std::vector<double> n(A, 0.0);
  for (std::size_t tau = 1; tau <= T; ++tau)
    for (std::size_t r = 0; r < A; ++r) {
      const double d = u[tau][r] - u[tau - 1][r];
      ls += std::abs(d);
      n[r] += sigmoid((std::abs(d) - cfg_.delta) / kappa);
    }
  const double nmax = A ? *std::max_element(n.begin(), n.end()) : 0.0;
  double lse_sum = 0.0;
  for (double nr : n) lse_sum += std::exp((nr - nmax) / kLseTemperature);
  const double ld = A ? nmax + kLseTemperature * std::log(lse_sum) : 0.0;
  for (std::size_t tau = 2; tau <= T; ++tau) {
    for (std::size_t r = 0; r < A; ++r)
      lm += std::max(0.0, -(u[tau][r] - u[tau - 1][r]) * (u[tau - 1][r] - u[tau - 2][r]));
    lm += std::max(0.0, -g[tau] * g[tau - 1]);
  }
  double gmean = 0.0;
  for (std::size_t tau = 1; tau <= T; ++tau) gmean += g[tau];
  gmean /= static_cast<double>(T);
  for (std::size_t tau = 1; tau <= T; ++tau) le += (g[tau] - gmean) * (g[tau] - gmean);

  const double total = cfg_.lambda_f * lf + cfg_.lambda_s * ls + cfg_.lambda_d * ld +
                       cfg_.lambda_m * lm + cfg_.lambda_e * le;
  if (!want_grad) return total;

  // Reverse pass. Adjoints of v, g, knots (chi) and attribute coordinates (u).
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> vbar(T + 1, 0.0), gbar(T + 1, 0.0);
  std::vector<Vector> chibar(T + 1, Vector(D, 0.0));
  std::vector<Vector> stepbar(T + 1, Vector(D, 0.0));
  std::vector<Vector> ubar(T + 1, Vector(A, 0.0));

  // Faithfulness: d|r|/dr = sign(r); r = yhat(x)/s - ytilde.
  std::vector<Vector> pred_grad;
  if (T > 1) pred_grad = predictor_.gradient(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = cfg_.lambda_f * sign(resid[i]) / N;
    if (c == 0.0) continue;
    const auto& sp = samples[i];
    if (sp.segment == 0) {
      const auto k = static_cast<std::size_t>(sp.position);
      vbar[k] -= c;
      if (T > 1 && k > 0 && k < T)
        for (std::size_t j = 0; j < D; ++j) chibar[k][j] += c * pred_grad[i][j] / target_.std;
    } else {
      const std::size_t tau = sp.segment;
      vbar[tau - 1] -= c;
      gbar[tau] -= c * sp.position;
      if (T > 1)
        for (std::size_t j = 0; j < D; ++j) {
          const double xg = c * pred_grad[i][j] / target_.std;
          chibar[tau - 1][j] += xg;
          stepbar[tau][j] += sp.position * xg;
        }
    }
  }

  // Evenness.
  for (std::size_t tau = 1; tau <= T; ++tau) gbar[tau] += cfg_.lambda_e * 2.0 * (g[tau] - gmean);

  // Monotonicity.
  for (std::size_t tau = 2; tau <= T; ++tau) {
    for (std::size_t r = 0; r < A; ++r) {
      const double a = u[tau][r] - u[tau - 1][r];
      const double b = u[tau - 1][r] - u[tau - 2][r];
      if (-a * b > 0.0) {
        // d(-a b)/da = -b ; d(-a b)/db = -a
        ubar[tau][r] += cfg_.lambda_m * -b;
        ubar[tau - 1][r] -= cfg_.lambda_m * -b;
        ubar[tau - 1][r] += cfg_.lambda_m * -a;
        ubar[tau - 2][r] -= cfg_.lambda_m * -a;
      }
    }
    if (-g[tau] * g[tau - 1] > 0.0) {
      gbar[tau] += cfg_.lambda_m * -g[tau - 1];
      gbar[tau - 1] += cfg_.lambda_m * -g[tau];
    }
  }

  // Sparsity and the smoothed disjointness.
  std::vector<double> soft(A, 0.0);
  for (std::size_t r = 0; r < A; ++r) soft[r] = std::exp((n[r] - nmax) / kLseTemperature) / lse_sum;
  for (std::size_t tau = 1; tau <= T; ++tau)
    for (std::size_t r = 0; r < A; ++r) {
      const double d = u[tau][r] - u[tau - 1][r];
      const double sg = sigmoid((std::abs(d) - cfg_.delta) / kappa);
      const double dd = cfg_.lambda_s * sign(d) + cfg_.lambda_d * soft[r] * sg * (1.0 - sg) / kappa * sign(d);
      ubar[tau][r] += dd;
      ubar[tau - 1][r] -= dd;
    }

  // v_tau = v_{tau-1} + g_tau
  for (std::size_t tau = T; tau >= 1; --tau) {
    vbar[tau - 1] += vbar[tau];
    gbar[tau] += vbar[tau];
  }
  // g_tau = w_tau . step_tau
  for (std::size_t tau = 1; tau <= T; ++tau) {
    auto w = weight(tau);
    double* wbar = grad.data() + w_off + (tau - 1) * D;
    for (std::size_t j = 0; j < D; ++j) {
      wbar[j] += gbar[tau] * step[tau][j];
      stepbar[tau][j] += gbar[tau] * w[j];
    }
  }
  // v_0 = w_1 . chi_0 + b_1
  {
    double* wbar = grad.data() + w_off;
    for (std::size_t j = 0; j < D; ++j) wbar[j] += vbar[0] * knots[0][j];
    grad.back() += vbar[0];
  }
  // step_tau = chi_tau - chi_{tau-1}
  for (std::size_t tau = 1; tau <= T; ++tau)
    for (std::size_t j = 0; j < D; ++j) {
      chibar[tau][j] += stepbar[tau][j];
      chibar[tau - 1][j] -= stepbar[tau][j];
    }
  // Interior knots back to their free attribute coordinates.
  for (std::size_t tau = 1; tau < T; ++tau)
    for (std::size_t f = 0; f < F; ++f) {
      const auto& blk = layout_.block(free_[f].attribute);
      double acc = ubar[tau][free_[f].attribute];
      if (!free_[f].categorical) {
        acc += chibar[tau][blk.offset];
      } else {
        for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j)
          acc += chibar[tau][j] * (subject_z_[j] - comparable_z_[j]);
      }
      grad[(tau - 1) * F + f] = acc;
    }
  return total;
}

// ---------------------------------------------------------------------------

std::size_t default_segments(const FeatureLayout& layout, std::span<const double> comparable_z,
                             std::span<const double> subject_z, double delta) {
  std::size_t differing = 0;
  for (std::size_t a = 0; a < layout.attribute_count(); ++a) {
    const auto& blk = layout.block(a);
    const bool differs = blk.categorical ? block_differs(blk, comparable_z, subject_z)
                                         : std::abs(subject_z[blk.offset] - comparable_z[blk.offset]) > delta;
    if (differs) ++differing;
  }
  return std::clamp<std::size_t>(differing, 1, DesiderataConfig::kMaxAutoSegments);
}

namespace {

struct Descent {
  std::vector<double> theta;
  double best = std::numeric_limits<double>::infinity();
  std::size_t epochs = 0;
  double learning_rate = 0.0;
};

// Adam with a plateau-halving learning rate over theta[first..]; returns the
// best iterate seen.
Descent adam_descent(const TraceObjective& objective, std::vector<double> theta,
                     const DesiderataConfig& cfg, std::size_t first) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> grad(theta.size()), m1(theta.size(), 0.0), m2(theta.size(), 0.0);
  Descent out;
  out.theta = theta;
  double lr = cfg.learning_rate;
  std::size_t since_best = 0, reductions = 0;
  double b1t = 1.0, b2t = 1.0;
  for (out.epochs = 1; out.epochs <= cfg.max_epochs; ++out.epochs) {
    const double f = objective.value_and_gradient(theta, grad);
    if (!std::isfinite(f))
      throw Error(ErrorCode::Diverged, "non-finite loss at epoch " + std::to_string(out.epochs));
    for (double gv : grad)
      if (!std::isfinite(gv))
        throw Error(ErrorCode::Diverged, "non-finite gradient at epoch " + std::to_string(out.epochs));
    if (f < out.best) {
      out.best = f;
      out.theta = theta;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      if (reductions >= cfg.max_lr_reductions) break;
      lr *= 0.5;
      ++reductions;
      since_best = 0;
    }
    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t i = first; i < theta.size(); ++i) {
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m1[i] / (1.0 - b1t)) / (std::sqrt(m2[i] / (1.0 - b2t)) + eps);
    }
    objective.project(theta);
  }
  out.epochs = std::min(out.epochs, cfg.max_epochs);
  out.learning_rate = lr;
  return out;
}

}  // namespace

TraceFit fit_trace(const Predictor& p, std::span<const double> comparable_z,
                   std::span<const double> subject_z, const DesiderataConfig& cfg) {
  return fit_trace(p, comparable_z, subject_z, cfg, FeatureLayout::numeric(comparable_z.size()));
}

TraceFit fit_trace(const Predictor& p, std::span<const double> comparable_z,
                   std::span<const double> subject_z, const DesiderataConfig& cfg,
                   const FeatureLayout& layout, NumericStats target) {
  cfg.validate();
  if (comparable_z.size() != layout.dimension() || subject_z.size() != layout.dimension() ||
      p.dimension() != layout.dimension())
    throw Error(ErrorCode::DimensionMismatch, "trace inputs disagree in dimension");
  if (std::equal(comparable_z.begin(), comparable_z.end(), subject_z.begin()))
    throw Error(ErrorCode::NoDifference, "comparable and subject are identical");

  const std::size_t T =
      cfg.segments ? cfg.segments : default_segments(layout, comparable_z, subject_z, cfg.delta);
  const Vector xc(comparable_z.begin(), comparable_z.end());
  const Vector xs(subject_z.begin(), subject_z.end());
  TraceObjective objective(p, xc, xs, layout, cfg, target, T);

  // Warm start: straight-line knots, local-linear weights, b_1 matching f at
  // the comparable; everything perturbed by N(0, init_std).
  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::normal_distribution<double> noise(0.0, 1.0);
  auto jitter = [&] { return cfg.init_std * noise(rng); };

  LocalSamplingOptions local;
  local.seed = splitmix64(cfg.seed ^ 0x5bd1e995ULL);
  local.samples = std::max<std::size_t>(local.samples, layout.dimension() + 1);
  const auto surrogate = fit_local_linear(p, xc, local);
  Vector w0 = surrogate.model.weights;
  for (double& w : w0) w /= target.std;
  const double yc = (p.predict_one(xc) - target.mean) / target.std;

  std::vector<Vector> interior;
  for (std::size_t tau = 1; tau < T; ++tau) {
    const double s = static_cast<double>(tau) / static_cast<double>(T);
    Vector x(xc.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = xc[i] + s * (xs[i] - xc[i]);
    interior.push_back(std::move(x));
  }
  std::vector<Vector> weights(T, w0);
  TraceModel straight(xc, xs, interior, weights, yc - dot(w0, xc), layout, target);
  std::vector<double> theta = objective.pack(straight);
  for (double& t : theta) t += jitter();
  objective.project(theta);

  auto phase = adam_descent(objective, std::move(theta), cfg, 0);
  // Second pass on weights and b_1 with the knots held at the best layout.
  auto polish = adam_descent(objective, phase.theta, cfg, objective.knot_parameter_count());
  if (polish.best < phase.best) phase.theta = std::move(polish.theta);

  TraceModel model = objective.unpack(phase.theta);
  LossBreakdown breakdown = loss(model, p, cfg);
  return TraceFit{std::move(model), std::move(breakdown), phase.epochs + polish.epochs, polish.learning_rate};
}

// ---------------------------------------------------------------------------

double trace_adjusted_value(const TraceModel& m, const Comparable& comparable, Anchoring anchoring) {
  double running = anchoring == Anchoring::ActualValue ? comparable.actual_value : comparable.ai_prediction;
  for (double d : m.segment_deltas()) running += d * m.target().std;
  return running;
}

TraceSteps extract_steps(const TraceModel& m, const Comparable& comparable, const Instance& subject,
                         const Standardizer& std, double delta, Anchoring anchoring) {
  const auto& schema = std.schema();
  if (std.dimension() != m.dimension())
    throw Error(ErrorCode::DimensionMismatch, "standardizer does not match the trace");
  check_conforms(schema, comparable.instance);
  check_conforms(schema, subject);

  TraceSteps out;
  out.anchor_value = anchoring == Anchoring::ActualValue ? comparable.actual_value : comparable.ai_prediction;
  Instance state = comparable.instance;
  state.id.reset();
  Vector state_z = m.attribute_coordinates(0);
  const auto deltas = m.segment_deltas();
  double running = out.anchor_value;
  const std::size_t T = m.segments();

  for (std::size_t tau = 1; tau <= T; ++tau) {
    TraceStep step;
    const Vector prev = m.attribute_coordinates(tau - 1);
    const Vector cur = m.attribute_coordinates(tau);
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const auto& def = schema.attributes[a];
      AttributeValue next = state.values[a];
      if (def.is_categorical()) {
        if (comparable.instance.values[a] == subject.values[a]) continue;
        const bool was = prev[a] >= 0.5, is = tau == T ? true : cur[a] >= 0.5;
        if (was == is) continue;
        next = is ? subject.values[a] : comparable.instance.values[a];
      } else {
        const bool changed = std::abs(cur[a] - prev[a]) > delta;
        const bool snap = tau == T && std::abs(cur[a] - state_z[a]) > delta;
        if (!changed && !snap) {
          if (tau == T) state.values[a] = subject.values[a];
          continue;
        }
        next = tau == T ? subject.values[a] : AttributeValue(std.destandardize_value(a, cur[a]));
        state_z[a] = cur[a];
      }
      if (next == state.values[a]) continue;
      step.changed_attributes.push_back({def.name, state.values[a], next});
      state.values[a] = next;
    }
    step.money_delta = deltas[tau - 1] * m.target().std;
    running += step.money_delta;
    step.running_value = running;
    step.state = state;
    out.steps.push_back(std::move(step));
  }
  out.steps.back().state = subject;
  out.steps.back().state.id.reset();
  out.final_adjusted_value = running;
  return out;
}

ReconciledEstimate trace_adjusted_estimate(std::span<const TraceModel> traces, const ComparableSet& set) {
  set.validate();
  if (traces.size() != set.size())
    throw Error(ErrorCode::DimensionMismatch, "one trace per comparable required");
  std::vector<double> adjusted;
  adjusted.reserve(traces.size());
  for (std::size_t c = 0; c < traces.size(); ++c)
    adjusted.push_back(trace_adjusted_value(traces[c], set.comparables[c]));
  return {weighted_mean(adjusted, set.similarities), uncertainty_bounds(adjusted),
          Method::TraceAdjustments};
}

// ---------------------------------------------------------------------------

namespace {
json config_json(const DesiderataConfig& c) {
  return json{{"lambda_f", c.lambda_f},
              {"lambda_s", c.lambda_s},
              {"lambda_d", c.lambda_d},
              {"lambda_m", c.lambda_m},
              {"lambda_e", c.lambda_e},
              {"delta", c.delta},
              {"segments", c.segments},
              {"samples_per_segment", c.samples_per_segment},
              {"max_epochs", c.max_epochs},
              {"learning_rate", c.learning_rate},
              {"init_std", c.init_std},
              {"seed", c.seed},
              {"patience", c.patience},
              {"max_lr_reductions", c.max_lr_reductions}};
}
}  // namespace

std::string config_to_json(const DesiderataConfig& cfg) { return config_json(cfg).dump(); }

void apply_config_overrides(DesiderataConfig& cfg, const std::string& json_object) {
  json j;
  try {
    j = json::parse(json_object);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config overrides must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lambda_f") cfg.lambda_f = value.get<double>();
      else if (key == "lambda_s") cfg.lambda_s = value.get<double>();
      else if (key == "lambda_d") cfg.lambda_d = value.get<double>();
      else if (key == "lambda_m") cfg.lambda_m = value.get<double>();
      else if (key == "lambda_e") cfg.lambda_e = value.get<double>();
      else if (key == "delta") cfg.delta = value.get<double>();
      else if (key == "segments") cfg.segments = value.get<std::size_t>();
      else if (key == "samples_per_segment") cfg.samples_per_segment = value.get<std::size_t>();
      else if (key == "max_epochs") cfg.max_epochs = value.get<std::size_t>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "init_std") cfg.init_std = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "patience") cfg.patience = value.get<std::size_t>();
      else if (key == "max_lr_reductions") cfg.max_lr_reductions = value.get<std::size_t>();
      else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' has the wrong type");
    }
  }
}

std::string trace_to_json(const TraceModel& m, const DesiderataConfig* cfg, const LossBreakdown* loss) {
  json doc{{"format", "cxai.trace"}, {"version", 1}, {"segments", m.segments()}};
  doc["knots"] = m.knots();
  doc["weights"] = m.weights();
  doc["base_bias"] = m.base_bias();
  json biases = json::array();
  for (std::size_t tau = 1; tau <= m.segments(); ++tau) biases.push_back(m.bias(tau));
  doc["biases"] = biases;
  json knot_values = json::array();
  for (std::size_t tau = 0; tau <= m.segments(); ++tau) knot_values.push_back(m.knot_value(tau));
  doc["knot_values"] = knot_values;
  doc["target"] = {{"mean", m.target().mean}, {"std", m.target().std}};
  json layout = json::array();
  for (const auto& b : m.layout().blocks())
    layout.push_back({{"offset", b.offset}, {"width", b.width}, {"categorical", b.categorical}});
  doc["layout"] = layout;
  if (cfg) doc["config"] = config_json(*cfg);
  if (loss) {
    doc["loss"] = {{"total", loss->total},
                   {"faithfulness", loss->faithfulness},
                   {"sparsity", loss->sparsity},
                   {"disjointness", loss->disjointness},
                   {"monotonicity", loss->monotonicity},
                   {"evenness", loss->evenness},
                   {"change_counts", loss->change_counts},
                   {"adjustments", loss->adjustments},
                   {"reversals", loss->reversals},
                   {"segment_deltas", loss->segment_deltas},
                   {"mean_delta", loss->mean_delta},
                   {"unevenness", loss->unevenness}};
  }
  return doc.dump();
}

TraceModel trace_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "cxai.trace")
      throw Error(ErrorCode::InvalidArgument, "not a cxai.trace document");
    if (doc.at("version").get<int>() != 1)
      throw Error(ErrorCode::InvalidArgument, "unsupported trace version");
    auto knots = doc.at("knots").get<std::vector<Vector>>();
    if (knots.size() < 2) throw Error(ErrorCode::InvalidArgument, "trace needs two endpoints");
    std::vector<FeatureBlock> blocks;
    for (const auto& b : doc.at("layout"))
      blocks.push_back({b.at("offset").get<std::size_t>(), b.at("width").get<std::size_t>(),
                        b.at("categorical").get<bool>()});
    Vector first = knots.front(), last = knots.back();
    std::vector<Vector> interior(knots.begin() + 1, knots.end() - 1);
    NumericStats target{doc.at("target").at("mean").get<double>(), doc.at("target").at("std").get<double>()};
    return TraceModel(std::move(first), std::move(last), std::move(interior),
                      doc.at("weights").get<std::vector<Vector>>(), doc.at("base_bias").get<double>(),
                      FeatureLayout(std::move(blocks)), target);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad trace document: ") + e.what());
  }
}

}  // namespace cxai
