#include "cxai/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

std::string axis_name(SweepAxis a) { return a == SweepAxis::NumberOfComparables ? "comparables" : "distance"; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// Per-comparable outcome of an adjustment method.
struct Adjusted {
  double value = 0.0;       // anchored on the actual value
  double prediction = 0.0;  // anchored on the AI prediction
};

Adjusted adjust_one(Method method, const ComparableSet& set, std::size_t i, const Predictor& p,
                    const FeatureLayout& layout, NumericStats target, const DesiderataConfig& cfg,
                    std::uint64_t seed) {
  const auto& c = set.comparables[i];
  const auto& cz = set.comparables_z[i];
  const std::uint64_t job = mix_seed(seed, c.row.value_or(i));
  if (method == Method::LinearAdjustments) {
    LocalSamplingOptions opt;
    opt.seed = job;
    opt.samples = std::max<std::size_t>(opt.samples, layout.dimension() + 1);
    const auto model = fit_local_linear(p, cz, opt);
    const auto out = linear_adjust(model, c.actual_value, cz, set.subject_z, layout);
    return {out.adjusted_value, c.ai_prediction + out.total_adjustment};
  }
  DesiderataConfig local = cfg;
  local.seed = job;
  try {
    const auto fit = fit_trace(p, cz, set.subject_z, local, layout, target);
    return {trace_adjusted_value(fit.model, c), trace_adjusted_value(fit.model, c, Anchoring::Prediction)};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoDifference) throw;
    return {c.actual_value, c.ai_prediction};
  }
}

template <class Adjust>
MethodOutcome reconcile(Method method, const ComparableSet& set, Adjust&& adjust) {
  MethodOutcome out;
  switch (method) {
    case Method::ComparablesOnly: {
      const auto value = weighted_average(set, ValueChannel::ActualValues);
      out.value_estimate = value.point_estimate;
      out.bounds = value.bounds;
      out.prediction_estimate = weighted_average(set, ValueChannel::AiPredictions).point_estimate;
      return out;
    }
    case Method::LinearRegression: {
      const auto value = regression_estimate(fit_regression(set), set.subject_z, set.comparables_z);
      out.value_estimate = value.point_estimate;
      out.bounds = value.bounds;
      out.prediction_estimate =
          regression_estimate(fit_regression_on_predictions(set), set.subject_z, set.comparables_z).point_estimate;
      return out;
    }
    case Method::LinearAdjustments:
    case Method::TraceAdjustments: {
      std::vector<double> values, predictions;
      for (std::size_t i = 0; i < set.size(); ++i) {
        const Adjusted a = adjust(i);
        values.push_back(a.value);
        predictions.push_back(a.prediction);
      }
      out.value_estimate = weighted_mean(values, set.similarities);
      out.prediction_estimate = weighted_mean(predictions, set.similarities);
      out.bounds = uncertainty_bounds(values);
      return out;
    }
  }
  invalid("unknown method");
}

std::vector<double> equal_width_edges(double lo, double hi, std::size_t bins) {
  if (!(hi > lo)) hi = lo + 1e-9;
  std::vector<double> edges(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  edges.back() = hi;
  return edges;
}

// Bin index of v; the last bin is closed. nullopt when outside the edges.
std::optional<std::size_t> bin_of(const std::vector<double>& edges, double v) {
  if (v < edges.front() || v > edges.back()) return std::nullopt;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const auto idx = static_cast<std::size_t>(it - edges.begin());
  return std::min(idx, edges.size() - 1) - 1;
}

std::vector<std::size_t> sample_subjects(std::size_t rows, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x5b1ec7));
  // Partial Fisher-Yates with an explicit draw so the order is library-independent.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (rows - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Sweep specification

void SweepSpec::validate() const {
  if (methods.empty()) invalid("sweep needs at least one method");
  if (axis == SweepAxis::NumberOfComparables) {
    if (k_values.empty()) invalid("comparables axis needs at least one k");
    for (auto k : k_values)
      if (k < 1 || k > 8) invalid("k=" + std::to_string(k) + " is outside [1, 8]");
  } else {
    if (distance_k < 1 || distance_k > 8) invalid("distance axis k must be in [1, 8]");
    if (bin_edges.empty() && bins == 0) invalid("distance axis needs bins or edges");
    if (!bin_edges.empty()) {
      if (bin_edges.size() < 2) invalid("distance axis needs at least two edges");
      for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1])) invalid("bin edges must be strictly increasing");
    }
  }
  if (n_subjects == 0) invalid("n_subjects must be positive");
  if (seeds.empty()) invalid("sweep needs at least one seed");
  if (!synthetic && dataset_path.empty()) invalid("sweep needs a dataset");
  if (!synthetic && !predictor) invalid("a csv dataset needs a predictor");
  trace.validate();
}

SweepSpec parse_sweep_spec(const std::string& json_text, const std::filesystem::path& base_dir) {
  SweepSpec spec;
  try {
    const json j = json::parse(json_text);
    const auto& ds = j.at("dataset");
    const auto kind = ds.at("kind").get<std::string>();
    if (kind == "synthetic") {
      SweepSpec::SyntheticData syn;
      syn.model_json = ds.at("model").dump();
      syn.rows = ds.value("rows", syn.rows);
      syn.noise_std = ds.value("noise_std", syn.noise_std);
      syn.seed = ds.value("seed", syn.seed);
      SyntheticPredictor::from_json(syn.model_json);
      spec.synthetic = std::move(syn);
    } else if (kind == "csv") {
      spec.dataset_path = resolve(base_dir, ds.at("path").get<std::string>());
      spec.schema_path = resolve(base_dir, ds.at("schema").get<std::string>());
    } else {
      invalid("unknown dataset kind '" + kind + "'");
    }
    if (j.contains("predictor")) spec.predictor = PredictorSpec::from_json(j.at("predictor").dump());

    for (const auto& m : j.at("methods")) {
      const auto name = m.get<std::string>();
      const auto method = parse_method(name);
      if (!method) invalid("unknown method '" + name + "'");
      spec.methods.push_back(*method);
    }
    const auto& axis = j.at("axis");
    const auto axis_kind = axis.at("kind").get<std::string>();
    if (axis_kind == "comparables") {
      spec.axis = SweepAxis::NumberOfComparables;
      spec.k_values = axis.at("values").get<std::vector<std::size_t>>();
    } else if (axis_kind == "distance") {
      spec.axis = SweepAxis::AverageDistance;
      spec.distance_k = axis.value("k", spec.distance_k);
      if (axis.contains("edges")) spec.bin_edges = axis.at("edges").get<std::vector<double>>();
      spec.bins = axis.value("bins", spec.bins);
    } else {
      invalid("unknown axis kind '" + axis_kind + "'");
    }
    spec.n_subjects = j.value("n_subjects", spec.n_subjects);
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    else if (j.contains("seed")) spec.seeds = {j.at("seed").get<std::uint64_t>()};
    if (j.contains("trace")) apply_config_overrides(spec.trace, j.at("trace").dump());
  } catch (const json::exception& e) {
    invalid(std::string("bad sweep spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

EvalTask load_task(const SweepSpec& spec) {
  if (spec.synthetic) {
    const auto f = SyntheticPredictor::from_json(spec.synthetic->model_json);
    Dataset ds = make_synthetic_dataset(f, spec.synthetic->rows, spec.synthetic->noise_std, spec.synthetic->seed);
    Standardizer std = fit_standardizer(ds);
    PredictorPtr p = spec.predictor ? make_predictor(*spec.predictor, ds, std)
                                    : std::make_shared<SyntheticPredictor>(f);
    return {std::move(ds), std::move(std), std::move(p)};
  }
  Dataset ds = load_csv(spec.dataset_path, load_schema(spec.schema_path));
  Standardizer std = fit_standardizer(ds);
  PredictorPtr p = make_predictor(*spec.predictor, ds, std);
  return {std::move(ds), std::move(std), std::move(p)};
}

// ---------------------------------------------------------------------------
// Sweep

MethodOutcome run_method(Method method, const ComparableSet& set, const Predictor& p,
                         const FeatureLayout& layout, NumericStats target, const DesiderataConfig& cfg,
                         std::uint64_t seed) {
  return reconcile(method, set, [&](std::size_t i) { return adjust_one(method, set, i, p, layout, target, cfg, seed); });
}

EvalReport run_sweep(const SweepSpec& spec) { return run_sweep(spec, load_task(spec)); }

EvalReport run_sweep(const SweepSpec& spec, const EvalTask& task) {
  spec.validate();
  const auto& ds = task.dataset;
  const auto& p = *task.predictor;
  const auto& layout = task.std.layout();
  const NumericStats target = task.std.target();
  if (p.dimension() != task.std.dimension())
    throw Error(ErrorCode::DimensionMismatch, "predictor and dataset disagree in dimension");

  const std::size_t max_k = spec.axis == SweepAxis::NumberOfComparables
                                ? *std::max_element(spec.k_values.begin(), spec.k_values.end())
                                : spec.distance_k;
  if (ds.size() < max_k + 1) throw Error(ErrorCode::KTooLarge, "dataset too small for k=" + std::to_string(max_k));
  if (spec.n_subjects > ds.size())
    invalid("n_subjects=" + std::to_string(spec.n_subjects) + " exceeds the dataset size");

  // One job per (seed, subject, axis slot): the comparable set and which bin it lands in.
  struct Job {
    std::size_t seed_index;
    std::size_t subject_row;
    std::size_t slot;
    ComparableSet set;
    double mean_distance = 0.0;
  };
  std::vector<Job> jobs;
  std::vector<double> subject_predictions(ds.size(), NAN);
  for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
    for (std::size_t row : sample_subjects(ds.size(), spec.n_subjects, spec.seeds[si])) {
      const auto& subject = ds.rows[row].instance;
      auto add = [&](std::size_t slot, std::size_t k) {
        Job job{si, row, slot, select_comparables(ds, task.std, subject, k, p, row)};
        job.mean_distance = mean_of(job.set.distances);
        jobs.push_back(std::move(job));
      };
      if (spec.axis == SweepAxis::NumberOfComparables)
        for (std::size_t a = 0; a < spec.k_values.size(); ++a) add(a, spec.k_values[a]);
      else
        add(0, spec.distance_k);
      if (std::isnan(subject_predictions[row])) subject_predictions[row] = p.predict_one(jobs.back().set.subject_z);
    }
  }

  EvalReport report;
  report.axis = spec.axis;
  std::size_t slots = spec.k_values.size();
  if (spec.axis == SweepAxis::AverageDistance) {
    report.bin_edges = spec.bin_edges;
    if (report.bin_edges.empty()) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& j : jobs) {
        lo = std::min(lo, j.mean_distance);
        hi = std::max(hi, j.mean_distance);
      }
      report.bin_edges = equal_width_edges(lo, hi, spec.bins);
    }
    slots = report.bin_edges.size() - 1;
    std::vector<Job> kept;
    for (auto& j : jobs)
      if (auto b = bin_of(report.bin_edges, j.mean_distance)) {
        j.slot = *b;
        kept.push_back(std::move(j));
      }
    jobs = std::move(kept);
  }

  // Adjusted values depend only on (seed, subject, comparable), so nested
  // comparable sets reuse earlier fits.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, int>, Adjusted> cache;
  struct Acc {
    std::size_t n = 0;
    double pe = 0, uf = 0, bw = 0;
  };
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Acc> acc;  // (seed, slot, method index)
  for (const auto& job : jobs) {
    const std::uint64_t seed = spec.seeds[job.seed_index];
    const double actual = ds.rows[job.subject_row].actual_value;
    const double ai = subject_predictions[job.subject_row];
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      const Method method = spec.methods[mi];
      const auto out = reconcile(method, job.set, [&](std::size_t i) {
        const auto key = std::make_tuple(job.seed_index, job.subject_row, *job.set.comparables[i].row,
                                         static_cast<int>(method));
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        const Adjusted a =
            adjust_one(method, job.set, i, p, layout, target, spec.trace, mix_seed(seed, job.subject_row));
        cache.emplace(key, a);
        return a;
      });
      auto& a = acc[{job.seed_index, job.slot, mi}];
      ++a.n;
      a.pe += std::abs(out.value_estimate - actual);
      a.uf += std::abs(out.prediction_estimate - ai);
      a.bw += out.bounds.width();
    }
  }

  for (std::size_t si = 0; si < spec.seeds.size(); ++si)
    for (std::size_t slot = 0; slot < slots; ++slot)
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        const auto it = acc.find({si, slot, mi});
        if (it == acc.end()) continue;
        const auto& a = it->second;
        EvalCell cell;
        cell.method = spec.methods[mi];
        cell.bin = slot;
        cell.axis_value = spec.axis == SweepAxis::NumberOfComparables
                              ? static_cast<double>(spec.k_values[slot])
                              : 0.5 * (report.bin_edges[slot] + report.bin_edges[slot + 1]);
        cell.seed = spec.seeds[si];
        cell.count = a.n;
        const double n = static_cast<double>(a.n);
        cell.prediction_error = a.pe / n;
        cell.unfaithfulness = a.uf / n;
        cell.bounds_width = a.bw / n;
        report.cells.push_back(cell);
      }
  return report;
}

std::vector<EvalCell> EvalReport::summary() const {
  std::vector<EvalCell> out;
  for (const auto& c : cells) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const EvalCell& o) { return o.method == c.method && o.bin == c.bin; });
    if (it == out.end()) {
      EvalCell s = c;
      s.seed = 0;
      s.count = 0;
      s.prediction_error = s.unfaithfulness = s.bounds_width = 0.0;
      out.push_back(s);
      it = out.end() - 1;
    }
    const double n = static_cast<double>(c.count);
    it->count += c.count;
    it->prediction_error += n * c.prediction_error;
    it->unfaithfulness += n * c.unfaithfulness;
    it->bounds_width += n * c.bounds_width;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.count);
    s.prediction_error /= n;
    s.unfaithfulness /= n;
    s.bounds_width /= n;
  }
  std::stable_sort(out.begin(), out.end(), [](const EvalCell& a, const EvalCell& b) { return a.bin < b.bin; });
  return out;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "method,axis,axis_value,metric,value,seed,count\n";
  const auto ax = axis_name(axis);
  for (const auto& c : cells) {
    const std::pair<const char*, double> metrics[] = {{"prediction_error", c.prediction_error},
                                                      {"unfaithfulness", c.unfaithfulness},
                                                      {"bounds_width", c.bounds_width}};
    for (const auto& [name, value] : metrics)
      os << method_name(c.method) << ',' << ax << ',' << num(c.axis_value) << ',' << name << ',' << num(value) << ','
         << c.seed << ',' << c.count << '\n';
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  auto cell_json = [](const EvalCell& c, bool with_seed) {
    json j{{"method", method_name(c.method)},
           {"axis_value", c.axis_value},
           {"bin", c.bin},
           {"count", c.count},
           {"prediction_error", c.prediction_error},
           {"unfaithfulness", c.unfaithfulness},
           {"bounds_width", c.bounds_width}};
    if (with_seed) j["seed"] = c.seed;
    return j;
  };
  json doc{{"format", "cxai.eval_report"}, {"version", 1}, {"axis", axis_name(axis)}};
  if (axis == SweepAxis::AverageDistance) doc["bin_edges"] = bin_edges;
  doc["cells"] = json::array();
  for (const auto& c : cells) doc["cells"].push_back(cell_json(c, true));
  doc["summary"] = json::array();
  for (const auto& c : summary()) doc["summary"].push_back(cell_json(c, false));
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Sensitivity

void set_lambda(DesiderataConfig& cfg, const std::string& vary, double value) {
  if (vary == "lambda_f") cfg.lambda_f = value;
  else if (vary == "lambda_s") cfg.lambda_s = value;
  else if (vary == "lambda_d") cfg.lambda_d = value;
  else if (vary == "lambda_m") cfg.lambda_m = value;
  else if (vary == "lambda_e") cfg.lambda_e = value;
  else invalid("cannot vary '" + vary + "' (expected lambda_f, lambda_s, lambda_d, lambda_m or lambda_e)");
}

void SensitivitySpec::validate() const {
  if (values.empty()) invalid("sensitivity needs at least one value");
  if (seeds.empty()) invalid("sensitivity needs at least one seed");
  DesiderataConfig probe = base;
  for (double v : values) {
    set_lambda(probe, vary, v);
    probe.validate();
  }
  const auto f = SyntheticPredictor::from_json(model_json);
  if (comparable_z.size() != f.dimension() || subject_z.size() != f.dimension())
    throw Error(ErrorCode::DimensionMismatch, "task points do not match the model dimension");
}

SensitivitySpec parse_sensitivity_spec(const std::string& json_text) {
  SensitivitySpec spec;
  try {
    const json j = json::parse(json_text);
    const auto& task = j.at("task");
    spec.model_json = task.at("model").dump();
    spec.comparable_z = task.at("comparable").get<Vector>();
    spec.subject_z = task.at("subject").get<Vector>();
    if (j.contains("base")) apply_config_overrides(spec.base, j.at("base").dump());
    spec.vary = j.at("vary").get<std::string>();
    spec.values = j.at("values").get<std::vector<double>>();
    if (j.contains("seeds")) {
      spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else if (j.contains("n_seeds")) {
      spec.seeds.resize(j.at("n_seeds").get<std::size_t>());
      std::iota(spec.seeds.begin(), spec.seeds.end(), std::uint64_t{0});
    }
  } catch (const json::exception& e) {
    invalid(std::string("bad sensitivity spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SensitivityReport run_sensitivity(const Predictor& p, std::span<const double> comparable_z,
                                  std::span<const double> subject_z, const DesiderataConfig& base,
                                  const std::string& vary, std::span<const double> values,
                                  std::span<const std::uint64_t> seeds) {
  if (values.empty()) invalid("sensitivity needs at least one value");
  if (seeds.empty()) invalid("sensitivity needs at least one seed");
  SensitivityReport report;
  report.vary = vary;
  for (double v : values) {
    DesiderataConfig cfg = base;
    set_lambda(cfg, vary, v);
    SensitivitySummary s;
    s.lambda = v;
    std::vector<double> uf, adj, rev, unev;
    for (auto seed : seeds) {
      cfg.seed = seed;
      const auto fit = fit_trace(p, comparable_z, subject_z, cfg);
      SensitivityRow row;
      row.lambda = v;
      row.seed = seed;
      row.unfaithfulness = fit.loss.faithfulness;
      row.adjustments = fit.loss.adjustments;
      row.reversals = fit.loss.reversals;
      row.unevenness = fit.loss.unevenness;
      row.knots = fit.model.knots();
      for (std::size_t t = 0; t <= fit.model.segments(); ++t) row.knot_values.push_back(fit.model.knot_value(t));
      uf.push_back(row.unfaithfulness);
      adj.push_back(row.adjustments);
      rev.push_back(row.reversals);
      unev.push_back(row.unevenness);
      report.rows.push_back(std::move(row));
    }
    s.n = seeds.size();
    s.unfaithfulness_mean = mean_of(uf);
    s.unfaithfulness_sd = sd_of(uf);
    s.adjustments_mean = mean_of(adj);
    s.adjustments_sd = sd_of(adj);
    s.reversals_mean = mean_of(rev);
    s.reversals_sd = sd_of(rev);
    s.unevenness_mean = mean_of(unev);
    s.unevenness_sd = sd_of(unev);
    report.summary.push_back(s);
  }
  return report;
}

SensitivityReport run_sensitivity(const SensitivitySpec& spec) {
  spec.validate();
  const auto f = SyntheticPredictor::from_json(spec.model_json);
  return run_sensitivity(f, spec.comparable_z, spec.subject_z, spec.base, spec.vary, spec.values, spec.seeds);
}

std::string SensitivityReport::to_csv() const {
  std::ostringstream os;
  os << "vary,lambda,seed,unfaithfulness,adjustments,reversals,unevenness\n";
  for (const auto& r : rows)
    os << vary << ',' << num(r.lambda) << ',' << r.seed << ',' << num(r.unfaithfulness) << ',' << r.adjustments
       << ',' << r.reversals << ',' << num(r.unevenness) << '\n';
  return os.str();
}

std::string SensitivityReport::to_json() const {
  json doc{{"format", "cxai.sensitivity_report"}, {"version", 1}, {"vary", vary}};
  doc["rows"] = json::array();
  for (const auto& r : rows)
    doc["rows"].push_back({{"lambda", r.lambda},
                           {"seed", r.seed},
                           {"unfaithfulness", r.unfaithfulness},
                           {"adjustments", r.adjustments},
                           {"reversals", r.reversals},
                           {"unevenness", r.unevenness},
                           {"knots", r.knots},
                           {"knot_values", r.knot_values}});
  doc["summary"] = json::array();
  for (const auto& s : summary)
    doc["summary"].push_back({{"lambda", s.lambda},
                              {"n", s.n},
                              {"unfaithfulness", {{"mean", s.unfaithfulness_mean}, {"sd", s.unfaithfulness_sd}}},
                              {"adjustments", {{"mean", s.adjustments_mean}, {"sd", s.adjustments_sd}}},
                              {"reversals", {{"mean", s.reversals_mean}, {"sd", s.reversals_sd}}},
                              {"unevenness", {{"mean", s.unevenness_mean}, {"sd", s.unevenness_sd}}}});
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Decision metrics

void DecisionResponse::validate() const {
  if (!std::isfinite(y_min) || !std::isfinite(y_max) || !std::isfinite(actual))
    invalid("response values must be finite");
  if (y_min > y_max) invalid("y_min exceeds y_max");
}

double normal_90_span() {
  static const double span = [] {
    const boost::math::normal unit;
    return boost::math::quantile(unit, 0.95) - boost::math::quantile(unit, 0.05);
  }();
  return span;
}

double correctness_probability_density(const DecisionResponse& r) {
  r.validate();
  if (!(r.y_max > r.y_min)) throw Error(ErrorCode::ZeroWidthInterval, "y_min equals y_max");
  const double sigma = (r.y_max - r.y_min) / normal_90_span();
  return boost::math::pdf(boost::math::normal(r.y_mean(), sigma), r.actual);
}

DecisionMetrics decision_metrics(const DecisionResponse& r) {
  DecisionMetrics m;
  m.density = correctness_probability_density(r);
  const double err = std::abs(r.y_mean() - r.actual);
  m.zero_error = err < kLogFloor;
  m.mean_error_log = std::log(std::max(err, kLogFloor));
  m.credible_interval_log = std::log(std::max(r.y_max - r.y_min, kLogFloor));
  return m;
}

}  // namespace cxai
