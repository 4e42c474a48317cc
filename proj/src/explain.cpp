#include "cxai/explain.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "cxai/baselines.hpp"
#include "cxai/task.hpp"

namespace cxai {

using json = nlohmann::json;

std::shared_ptr<const TraceFit> TraceCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = fits_.find(key);
  return it == fits_.end() ? nullptr : it->second;
}

void TraceCache::insert(const std::string& key, std::shared_ptr<const TraceFit> fit) {
  std::lock_guard lock(mu_);
  fits_.emplace(key, std::move(fit));
}

std::size_t TraceCache::size() const {
  std::lock_guard lock(mu_);
  return fits_.size();
}

Instance instance_from_json(const AttributeSchema& schema, const std::string& json_object) {
  json j;
  try {
    j = json::parse(json_object);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("subject is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "subject must be an object of attribute values");
  Instance x;
  for (const auto& def : schema.attributes) {
    if (!j.contains(def.name)) throw Error(ErrorCode::ParseError, "subject is missing '" + def.name + "'");
    const auto& v = j.at(def.name);
    if (def.is_numeric()) {
      if (!v.is_number()) throw Error(ErrorCode::ParseError, "'" + def.name + "' must be a number");
      x.values.emplace_back(v.get<double>());
    } else if (v.is_string()) {
      x.values.emplace_back(v.get<std::string>());
    } else if (v.is_number()) {
      // Levels that look numeric ("1".."5") may arrive as numbers.
      x.values.emplace_back(v.is_number_integer() ? std::to_string(v.get<long long>()) : v.dump());
    } else {
      throw Error(ErrorCode::ParseError, "'" + def.name + "' must be a level name");
    }
  }
  for (const auto& [key, _] : j.items())
    if (key != "id" && !schema.index_of(key)) throw Error(ErrorCode::ParseError, "unknown attribute '" + key + "'");
  if (j.contains("id") && j.at("id").is_string()) x.id = j.at("id").get<std::string>();
  check_conforms(schema, x);
  return x;
}

std::string relative_error_label(double prediction, double actual) {
  if (actual == 0.0) return prediction == 0.0 ? "0.0% higher" : "n/a";
  const double rel = (prediction - actual) / std::abs(actual) * 100.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.1f%% %s", std::abs(rel), rel < 0 ? "lower" : "higher");
  return buf;
}

namespace {

json value_json(const AttributeValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

json attributes_json(const AttributeSchema& schema, const Instance& x) {
  json values = json::object(), shown = json::object();
  for (std::size_t a = 0; a < schema.size(); ++a) {
    values[schema.attributes[a].name] = value_json(x.values[a]);
    shown[schema.attributes[a].name] = format_value(schema.attributes[a], x.values[a]);
  }
  return {{"values", values}, {"display", shown}};
}

json schema_json(const AttributeSchema& schema) {
  json attrs = json::array();
  for (const auto& def : schema.attributes) {
    json a{{"name", def.name}, {"display_precision", def.display_precision}};
    if (def.is_numeric()) {
      a["kind"] = "numeric";
      a["unit"] = std::get<NumericKind>(def.kind).unit;
    } else {
      a["kind"] = "categorical";
      a["levels"] = def.categorical().levels;
    }
    attrs.push_back(std::move(a));
  }
  return {{"attributes", attrs}, {"target_name", schema.target_name}, {"target_unit", schema.target_unit}};
}

json adjustment_json(const AttributeAdjustment& a) {
  return {{"attribute", a.attribute},
          {"from", value_json(a.from)},
          {"to", value_json(a.to)},
          {"value_change", a.value_change},
          {"money_delta", a.money_delta}};
}

json steps_json(const AttributeSchema& schema, const TraceSteps& steps) {
  json out = json::array();
  for (const auto& s : steps.steps) {
    json changed = json::array();
    for (const auto& c : s.changed_attributes)
      changed.push_back({{"attribute", c.attribute}, {"from", value_json(c.from)}, {"to", value_json(c.to)}});
    out.push_back({{"changed_attributes", changed},
                   {"money_delta", s.money_delta},
                   {"running_value", s.running_value},
                   {"state", attributes_json(schema, s.state)}});
  }
  return {{"anchor_value", steps.anchor_value},
          {"final_adjusted_value", steps.final_adjusted_value},
          {"steps", out}};
}

std::string subject_key(const Instance& subject, std::optional<std::size_t> row) {
  if (row) return "row:" + std::to_string(*row);
  json j = json::array();
  for (const auto& v : subject.values) j.push_back(value_json(v));
  return "inline:" + j.dump();
}

}  // namespace

std::string explain_document(const ExplainContext& ctx, const Instance& subject,
                             std::optional<std::size_t> subject_row, const ExplainRequest& request) {
  const auto& schema = ctx.dataset.schema;
  check_conforms(schema, subject);
  request.config.validate();
  const auto set = select_comparables(ctx.dataset, ctx.std, subject, request.k, ctx.predictor, subject_row);
  const double subject_prediction = ctx.predictor.predict_one(set.subject_z);

  json doc{{"format", "cxai.explanation"},
           {"version", 1},
           {"dataset", ctx.dataset_id},
           {"method", method_name(request.method)},
           {"k", request.k},
           {"seed", request.seed},
           {"schema", schema_json(schema)}};

  json subj{{"id", subject.id ? json(*subject.id) : json(nullptr)},
            {"attributes", attributes_json(schema, subject)},
            {"ai_prediction", subject_prediction}};
  if (subject_row) subj["actual_value"] = ctx.dataset.rows[*subject_row].actual_value;
  doc["subject"] = subj;

  json comps = json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set.comparables[i];
    comps.push_back({{"id", c.instance.id ? json(*c.instance.id) : json(nullptr)},
                     {"row", c.row ? json(*c.row) : json(nullptr)},
                     {"attributes", attributes_json(schema, c.instance)},
                     {"actual_value", c.actual_value},
                     {"ai_prediction", c.ai_prediction},
                     {"ai_relative_error", c.actual_value != 0.0 ? (c.ai_prediction - c.actual_value) / std::abs(c.actual_value) : 0.0},
                     {"ai_error_label", relative_error_label(c.ai_prediction, c.actual_value)},
                     {"distance", set.distances[i]},
                     {"similarity", set.similarities[i]}});
  }

  ReconciledEstimate estimate;
  std::vector<double> reconciled_values;
  switch (request.method) {
    case Method::ComparablesOnly: {
      estimate = weighted_average(set, ValueChannel::ActualValues);
      for (const auto& c : set.comparables) reconciled_values.push_back(c.actual_value);
      break;
    }
    case Method::LinearRegression: {
      const auto model = fit_regression(set);
      estimate = regression_estimate(model, set.subject_z, set.comparables_z);
      json factors = json::array();
      const auto& layout = ctx.std.layout();
      for (std::size_t a = 0; a < layout.attribute_count(); ++a) {
        const auto& blk = layout.block(a);
        double contribution = 0.0;
        json weights = json::array();
        for (std::size_t j = blk.offset; j < blk.offset + blk.width; ++j) {
          contribution += model.weights[j] * set.subject_z[j];
          weights.push_back(model.weights[j]);
        }
        json f{{"attribute", schema.attributes[a].name}, {"weights", weights}, {"contribution", contribution}};
        if (!blk.categorical) f["per_unit"] = model.weights[blk.offset] / ctx.std.stats()[a].std;
        factors.push_back(std::move(f));
      }
      doc["regression"] = {{"bias", model.bias},
                           {"factors", factors},
                           {"residual_rmse", model.diagnostics.residual_rmse},
                           {"condition", std::isfinite(model.diagnostics.condition) ? json(model.diagnostics.condition) : json(nullptr)},
                           {"regularized", model.diagnostics.regularized}};
      break;
    }
    case Method::LinearAdjustments: {
      for (std::size_t i = 0; i < set.size(); ++i) {
        LocalSamplingOptions opt;
        opt.seed = mix_seed(request.seed, set.comparables[i].row.value_or(i));
        opt.samples = std::max<std::size_t>(opt.samples, ctx.std.dimension() + 1);
        const auto model = fit_local_linear(ctx.predictor, set.comparables_z[i], opt);
        const auto out = linear_adjust(model, set.comparables[i], set.comparables_z[i], set.subject_z, ctx.std, subject);
        json deltas = json::array();
        for (const auto& d : out.deltas) deltas.push_back(adjustment_json(d));
        comps[i]["adjustments"] = {{"deltas", deltas},
                                   {"total_adjustment", out.total_adjustment},
                                   {"adjusted_value", out.adjusted_value},
                                   {"surrogate_seed", opt.seed}};
        reconciled_values.push_back(out.adjusted_value);
      }
      break;
    }
    case Method::TraceAdjustments: {
      const std::string base = ctx.dataset_id + "|" + subject_key(subject, subject_row) + "|" +
                               std::to_string(request.config.digest()) + "|";
      for (std::size_t i = 0; i < set.size(); ++i) {
        DesiderataConfig cfg = request.config;
        cfg.seed = mix_seed(request.seed, set.comparables[i].row.value_or(i));
        const std::string key = base + std::to_string(set.comparables[i].row.value_or(i)) + "|" + std::to_string(cfg.seed);
        std::shared_ptr<const TraceFit> fit = ctx.cache ? ctx.cache->find(key) : nullptr;
        if (!fit) {
          fit = std::make_shared<const TraceFit>(
              fit_trace(ctx.predictor, set.comparables_z[i], set.subject_z, cfg, ctx.std.layout(), ctx.std.target()));
          if (ctx.cache) ctx.cache->insert(key, fit);
        }
        const auto steps = extract_steps(fit->model, set.comparables[i], subject, ctx.std, cfg.delta);
        json t = steps_json(schema, steps);
        t["trace_seed"] = cfg.seed;
        t["trace"] = json::parse(trace_to_json(fit->model, &cfg, &fit->loss));
        comps[i]["trace"] = std::move(t);
        reconciled_values.push_back(steps.final_adjusted_value);
      }
      break;
    }
  }
  if (request.method == Method::LinearAdjustments || request.method == Method::TraceAdjustments) {
    estimate.method = request.method;
    estimate.point_estimate = weighted_mean(reconciled_values, set.similarities);
    estimate.bounds = uncertainty_bounds(reconciled_values);
  }
  doc["comparables"] = std::move(comps);

  json terms = json::array();
  if (request.method != Method::LinearRegression)
    for (std::size_t i = 0; i < set.size(); ++i)
      terms.push_back({{"weight", set.similarities[i]}, {"value", reconciled_values[i]}});
  doc["estimate"] = {{"value", estimate.point_estimate},
                     {"approximate", true},
                     {"low", estimate.bounds.low},
                     {"high", estimate.bounds.high},
                     {"width", estimate.bounds.width()},
                     {"method", method_name(estimate.method)},
                     {"terms", terms}};
  if (request.method == Method::TraceAdjustments) doc["config"] = json::parse(config_to_json(request.config));
  return doc.dump(2);
}

}  // namespace cxai
