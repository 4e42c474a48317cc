#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cxai/evaluation.hpp"

using namespace cxai;

namespace {

// Standard normal CDF through erfc, and its inverse by bisection.
double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double inverse_phi(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

AttributeSchema numeric_schema(std::size_t d) {
  AttributeSchema s;
  for (std::size_t r = 0; r < d; ++r) s.attributes.push_back({"x" + std::to_string(r), NumericKind{}});
  s.target_name = "y";
  return s;
}

// Task over hand-placed points with an identity standardizer.
EvalTask hand_task(const std::vector<Vector>& xs, const std::vector<double>& ys, PredictorPtr p) {
  EvalTask t{Dataset{}, Standardizer(numeric_schema(xs[0].size()), std::vector<NumericStats>(xs[0].size()), {0, 1}),
             std::move(p)};
  t.dataset.schema = numeric_schema(xs[0].size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Instance inst;
    for (double v : xs[i]) inst.values.emplace_back(v);
    inst.id = "r" + std::to_string(i);
    t.dataset.rows.push_back({inst, ys[i]});
  }
  return t;
}

SweepSpec comparables_spec(std::vector<Method> methods, std::vector<std::size_t> ks, std::size_t subjects,
                           std::vector<std::uint64_t> seeds) {
  SweepSpec spec;
  spec.synthetic = SweepSpec::SyntheticData{};
  spec.methods = std::move(methods);
  spec.k_values = std::move(ks);
  spec.n_subjects = subjects;
  spec.seeds = std::move(seeds);
  return spec;
}

ComparableSet hand_set(const Predictor& p, Vector subject, std::vector<Vector> xs, std::vector<double> ys) {
  ComparableSet set;
  set.subject_z = std::move(subject);
  const auto layout = FeatureLayout::numeric(set.subject_z.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Comparable c;
    c.actual_value = ys[i];
    c.ai_prediction = p.predict_one(xs[i]);
    c.row = i;
    set.comparables.push_back(c);
    set.distances.push_back(layout.distance(xs[i], set.subject_z));
  }
  set.comparables_z = std::move(xs);
  set.similarities = similarities_from_distances(set.distances);
  return set;
}

}  // namespace

TEST(Sweep, SingleSubjectSingleComparable) {
  auto p = std::make_shared<SyntheticPredictor>(SyntheticPredictor::linear({1.0}, 0.0));
  const auto task = hand_task({{0.0}, {1.0}}, {10.0, 13.5}, p);
  auto spec = comparables_spec({Method::ComparablesOnly}, {1}, 1, {3});
  const auto report = run_sweep(spec, task);
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(report.cells[0].prediction_error, 3.5);
  EXPECT_DOUBLE_EQ(report.cells[0].bounds_width, 0.0);
  EXPECT_EQ(report.cells[0].count, 1u);
  EXPECT_EQ(report.cells[0].seed, 3u);
}

TEST(Sweep, SelfConsistentOnNoiselessLinearTask) {
  // Ground truth equals the predictor; regression with k > d and linear
  // adjustments are exact up to the ridge term and surrogate sampling.
  auto spec = comparables_spec({Method::LinearRegression, Method::LinearAdjustments}, {4}, 10, {1});
  spec.synthetic->model_json = SyntheticPredictor::linear({2.0, -1.0}, 3.0).to_json();
  spec.synthetic->noise_std = 0.0;
  spec.synthetic->rows = 60;
  const auto report = run_sweep(spec);
  ASSERT_EQ(report.cells.size(), 2u);
  for (const auto& c : report.cells) {
    EXPECT_LT(c.prediction_error, 1e-3) << method_name(c.method);
    EXPECT_LT(c.unfaithfulness, 1e-3) << method_name(c.method);
  }
}

TEST(Sweep, TraceBeatsLinearAdjustOnDistantQuadraticComparables) {
  const SyntheticPredictor f = SyntheticPredictor::quadratic({1.0}, {0.0}, 0.0);
  const auto set = hand_set(f, {0.0}, {{-2.0}, {2.5}}, {4.1, 6.2});
  DesiderataConfig cfg;
  const auto lin = run_method(Method::LinearAdjustments, set, f, FeatureLayout::numeric(1), {}, cfg, 5);
  const auto tr = run_method(Method::TraceAdjustments, set, f, FeatureLayout::numeric(1), {}, cfg, 5);

  // Oracle: the surrogate slope at x_c is the derivative 2 x_c, so the
  // prediction-anchored adjusted value is x_c^2 + 2 x_c (0 - x_c) = -x_c^2.
  double lin_oracle = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double xc = set.comparables_z[i][0];
    lin_oracle += set.similarities[i] * (-xc * xc);
  }
  const double truth = f.predict_one({0.0});
  EXPECT_NEAR(std::abs(lin.prediction_estimate - truth), std::abs(lin_oracle - truth), 0.1);
  EXPECT_LT(std::abs(tr.prediction_estimate - truth), std::abs(lin.prediction_estimate - truth));
}

TEST(SweepProperty, NestedComparablesWidenBounds) {
  const auto f = SyntheticPredictor::sinusoid_plus_linear({1, 1}, {2, 1}, {0, 0}, {1, 0.5}, 0);
  const Dataset ds = make_synthetic_dataset(f, 80, 0.1, 11);
  const Standardizer std = fit_standardizer(ds);
  DesiderataConfig cfg;
  for (std::size_t row = 0; row < 20; ++row) {
    double prev = -1;
    for (std::size_t k = 1; k <= 8; ++k) {
      const auto set = select_comparables(ds, std, ds.rows[row].instance, k, f, row);
      const auto out = run_method(Method::ComparablesOnly, set, f, std.layout(), std.target(), cfg, 0);
      EXPECT_GE(out.bounds.width(), prev);
      prev = out.bounds.width();
    }
  }
}

TEST(SweepProperty, DeterministicPerSeed) {
  auto spec = comparables_spec({Method::ComparablesOnly, Method::LinearRegression, Method::LinearAdjustments,
                                Method::TraceAdjustments},
                               {2, 3}, 3, {4, 9});
  spec.synthetic->model_json = SyntheticPredictor::sinusoid_plus_linear({1, 1}, {2, 1}, {0, 0}, {1, 0.5}, 0).to_json();
  spec.synthetic->rows = 50;
  const auto a = run_sweep(spec);
  const auto b = run_sweep(spec);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.cells.size(), 2u * 2u * 4u);
  for (const auto& c : a.cells) {
    EXPECT_GE(c.bounds_width, 0.0);
    EXPECT_EQ(c.count, 3u);
  }
}

TEST(Sweep, DistanceAxisCoversEverySubjectOnce) {
  SweepSpec spec = comparables_spec({Method::ComparablesOnly}, {}, 30, {1, 2});
  spec.axis = SweepAxis::AverageDistance;
  spec.distance_k = 3;
  spec.synthetic->model_json = SyntheticPredictor::linear({1, 1, 1}, 0).to_json();
  spec.synthetic->rows = 100;
  const auto report = run_sweep(spec);
  ASSERT_EQ(report.bin_edges.size(), 9u);
  std::size_t total = 0;
  for (const auto& c : report.cells) {
    total += c.count;
    EXPECT_GE(c.axis_value, report.bin_edges[c.bin]);
    EXPECT_LE(c.axis_value, report.bin_edges[c.bin + 1]);
  }
  EXPECT_EQ(total, 60u);
  std::size_t summary_total = 0;
  for (const auto& c : report.summary()) summary_total += c.count;
  EXPECT_EQ(summary_total, 60u);
}

TEST(Sweep, CsvIsLongFormat) {
  auto spec = comparables_spec({Method::ComparablesOnly, Method::LinearRegression}, {2, 4}, 2, {7});
  spec.synthetic->model_json = SyntheticPredictor::linear({1, 2}, 0).to_json();
  spec.synthetic->rows = 30;
  const auto csv = run_sweep(spec).to_csv();
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 2 * 2 * 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,axis,axis_value,metric,value,seed,count");
}

TEST(SweepSpecParsing, ParsesAndValidates) {
  const auto spec = parse_sweep_spec(R"({
    "dataset": {"kind": "synthetic", "model": {"kind": "linear", "weights": [1, 2], "bias": 0}, "rows": 50},
    "methods": ["comparables", "trace"],
    "axis": {"kind": "comparables", "values": [2, 4, 8]},
    "n_subjects": 5, "seeds": [1, 2], "trace": {"lambda_s": 3, "max_epochs": 100}})");
  EXPECT_EQ(spec.methods.size(), 2u);
  EXPECT_EQ(spec.k_values, (std::vector<std::size_t>{2, 4, 8}));
  EXPECT_EQ(spec.trace.lambda_s, 3.0);
  EXPECT_EQ(spec.trace.max_epochs, 100u);
  EXPECT_EQ(spec.synthetic->rows, 50u);

  const char* bad[] = {
      R"({"dataset": {"kind": "synthetic", "model": {"kind": "linear", "weights": [1]}}, "methods": ["comparables"], "axis": {"kind": "comparables", "values": [9]}})",
      R"({"dataset": {"kind": "synthetic", "model": {"kind": "linear", "weights": [1]}}, "methods": ["nope"], "axis": {"kind": "comparables", "values": [2]}})",
      R"({"dataset": {"kind": "synthetic", "model": {"kind": "linear", "weights": [1]}}, "methods": [], "axis": {"kind": "comparables", "values": [2]}})",
      R"({"dataset": {"kind": "csv", "path": "a.csv", "schema": "s.json"}, "methods": ["comparables"], "axis": {"kind": "comparables", "values": [2]}})",
      R"({"dataset": {"kind": "synthetic", "model": {"kind": "linear", "weights": [1]}}, "methods": ["comparables"], "axis": {"kind": "distance", "edges": [1, 0]}})",
      R"(not json)"};
  for (const char* text : bad) {
    try {
      parse_sweep_spec(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument) << text;
    }
  }
}

TEST(Sensitivity, EvennessLowersUnevenness) {
  const auto f = SyntheticPredictor::sinusoid_plus_linear({1.0, 0.8}, {2.0, 3.0}, {0.0, 0.5}, {0.5, -0.5}, 0.0);
  DesiderataConfig base;
  base.segments = 3;
  const std::vector<double> values{0.0, 100.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5};
  const auto report = run_sensitivity(f, Vector{-1.0, -0.8}, Vector{1.2, 1.0}, base, "lambda_e", values, seeds);
  ASSERT_EQ(report.summary.size(), 2u);
  // Oracle: population variance recomputed from the stored knot values.
  for (const auto& r : report.rows) {
    std::vector<double> d;
    for (std::size_t t = 1; t < r.knot_values.size(); ++t) d.push_back(r.knot_values[t] - r.knot_values[t - 1]);
    double m = 0;
    for (double x : d) m += x / static_cast<double>(d.size());
    double v = 0;
    for (double x : d) v += (x - m) * (x - m) / static_cast<double>(d.size());
    EXPECT_NEAR(r.unevenness, v, 1e-12);
  }
  EXPECT_LT(report.summary[1].unevenness_mean, report.summary[0].unevenness_mean);
}

TEST(Sensitivity, StrongSparsityRemovesBacktracking) {
  // The L1 path length can never drop below |x_s - x_c|_1; a heavy sparsity
  // weight should bring every trained trace close to that floor.
  const auto f = SyntheticPredictor::sinusoid_plus_linear({1, 1, 1}, {1.5, 2, 1}, {0, 0.3, 0.6}, {1, 0.5, -0.5}, 0);
  const Vector c{-1, 0.5, -0.7}, s{0.8, -0.6, 0.9};
  const double floor = std::abs(s[0] - c[0]) + std::abs(s[1] - c[1]) + std::abs(s[2] - c[2]);
  const std::vector<double> values{0.0, 100.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  const auto report = run_sensitivity(f, c, s, DesiderataConfig{}, "lambda_s", values, seeds);
  double excess[2] = {0, 0};
  for (const auto& r : report.rows) {
    double length = 0;
    for (std::size_t t = 1; t < r.knots.size(); ++t)
      for (std::size_t a = 0; a < 3; ++a) length += std::abs(r.knots[t][a] - r.knots[t - 1][a]);
    EXPECT_GE(length, floor - 1e-12);
    excess[r.lambda > 0] += length - floor;
    if (r.lambda > 0) EXPECT_LT(length - floor, 0.05);
  }
  EXPECT_LT(excess[1], excess[0]);
}

TEST(Sensitivity, CountsMatchRecountOfStoredKnots) {
  const auto f = SyntheticPredictor::quadratic({0.5, -1.0, 0.8}, {1.0, 0.2, -0.3}, 0.0);
  DesiderataConfig base;
  base.segments = 4;
  base.max_epochs = 300;
  const std::vector<double> values{0.0, 1.0, 10.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  const auto report = run_sensitivity(f, Vector{-1.0, 0.5, 0.0}, Vector{1.0, -0.5, 1.5}, base, "lambda_m", values, seeds);
  ASSERT_EQ(report.rows.size(), 9u);
  const double delta = base.delta;
  for (const auto& r : report.rows) {
    int adjustments = 0, reversals = 0;
    auto flips = [&](const std::vector<double>& steps) {
      double prev = 0;
      for (double s : steps) {
        if (std::abs(s) <= delta) continue;
        if (prev != 0 && (s > 0) != (prev > 0)) ++reversals;
        prev = s;
      }
    };
    for (std::size_t a = 0; a < 3; ++a) {
      std::vector<double> steps;
      for (std::size_t t = 1; t < r.knots.size(); ++t) {
        steps.push_back(r.knots[t][a] - r.knots[t - 1][a]);
        adjustments += std::abs(steps.back()) > delta;
      }
      flips(steps);
    }
    std::vector<double> value_steps;
    for (std::size_t t = 1; t < r.knot_values.size(); ++t) value_steps.push_back(r.knot_values[t] - r.knot_values[t - 1]);
    flips(value_steps);
    EXPECT_EQ(r.adjustments, adjustments);
    EXPECT_EQ(r.reversals, reversals);
  }
}

TEST(Sensitivity, SingleDifferingAttributeIsOneAdjustment) {
  const auto f = SyntheticPredictor::quadratic({1.0, 1.0}, {0.0, 0.0}, 0.0);
  const std::vector<double> values{0.0, 1.0, 10.0, 100.0};
  std::vector<std::uint64_t> seeds{0, 1};
  const auto report = run_sensitivity(f, Vector{-1.0, 0.3}, Vector{1.0, 0.3}, DesiderataConfig{}, "lambda_s", values, seeds);
  for (const auto& r : report.rows) EXPECT_EQ(r.adjustments, 1);
}

TEST(Sensitivity, SpecValidation) {
  const std::string ok = R"({"task": {"model": {"kind": "linear", "weights": [1, 1]}, "comparable": [0, 0], "subject": [1, 1]},
                             "vary": "lambda_s", "values": [0, 10], "n_seeds": 3})";
  const auto spec = parse_sensitivity_spec(ok);
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  const auto csv = run_sensitivity(spec).to_csv();
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 2 * 3);
  for (const char* bad : {
           R"({"task": {"model": {"kind": "linear", "weights": [1, 1]}, "comparable": [0, 0], "subject": [1, 1]}, "vary": "lambda_s", "values": []})",
           R"({"task": {"model": {"kind": "linear", "weights": [1, 1]}, "comparable": [0, 0], "subject": [1, 1]}, "vary": "delta", "values": [1]})",
           R"({"task": {"model": {"kind": "linear", "weights": [1, 1]}, "comparable": [0], "subject": [1, 1]}, "vary": "lambda_s", "values": [1]})"}) {
    EXPECT_THROW(parse_sensitivity_spec(bad), Error) << bad;
  }
}

TEST(Decision, SpanMatchesBisectionOracle) {
  const double oracle = inverse_phi(0.95) - inverse_phi(0.05);
  EXPECT_NEAR(normal_90_span(), oracle, 1e-9);
  EXPECT_NEAR(normal_90_span(), 3.2897, 1e-4);
}

TEST(Decision, DensityAtMeanAndNinetyPercentMass) {
  const DecisionResponse r{200000, 1000000, 600000};
  const double w = 800000;
  EXPECT_NEAR(correctness_probability_density(r), normal_90_span() / (w * std::sqrt(2 * M_PI)), 1e-18);
  const double sigma = w / (inverse_phi(0.95) - inverse_phi(0.05));
  const double mass = phi((r.y_max - r.y_mean()) / sigma) - phi((r.y_min - r.y_mean()) / sigma);
  EXPECT_NEAR(mass, 0.90, 1e-6);
}

TEST(DecisionProperty, DensityIntegratesToOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = a + 0.1 + std::abs(u(rng));
    const double sigma = (b - a) / 3.2897;
    const double lo = 0.5 * (a + b) - 12 * sigma, hi = 0.5 * (a + b) + 12 * sigma;
    const int n = 4000;  // Simpson
    const double h = (hi - lo) / n;
    double s = 0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
      s += w * correctness_probability_density({a, b, lo + i * h});
    }
    EXPECT_NEAR(s * h / 3, 1.0, 1e-6);
  }
}

TEST(Decision, MetricsExamples) {
  const auto wide = decision_metrics({200000, 1000000, 437000});
  EXPECT_DOUBLE_EQ(wide.credible_interval_log, std::log(800000.0));
  EXPECT_DOUBLE_EQ(wide.mean_error_log, std::log(163000.0));
  EXPECT_FALSE(wide.zero_error);

  const auto exact = decision_metrics({1, 3, 2});
  EXPECT_TRUE(exact.zero_error);
  EXPECT_DOUBLE_EQ(exact.mean_error_log, std::log(kLogFloor));

  EXPECT_DOUBLE_EQ(decision_metrics({0, 2, 2}).mean_error_log, 0.0);
}

TEST(Decision, Errors) {
  try {
    correctness_probability_density({5, 5, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroWidthInterval);
  }
  try {
    decision_metrics({6, 5, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}
