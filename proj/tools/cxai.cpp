// cxai: explain AI predictions with comparables, run evaluation sweeps and
// sensitivity analyses, or serve the HTTP API.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cxai/evaluation.hpp"
#include "cxai/explain.hpp"
#include "cxai/service.hpp"
#include "cxai/task.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cxai;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kPredictor = 4, kBind = 5 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::KTooLarge:
    case ErrorCode::NoDifference: return kConfig;
    case ErrorCode::RemoteUnavailable:
    case ErrorCode::RemoteProtocol:
    case ErrorCode::Diverged: return kPredictor;
    default: return kData;
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

// Flags shared by explain and serve. Unset flags fall back to the environment
// and then to the optional --config file.
struct ModelFlags {
  std::string config_file;
  std::string dataset, schema, predictor;
  CLI::Option* dataset_opt = nullptr;
  CLI::Option* schema_opt = nullptr;
  CLI::Option* predictor_opt = nullptr;

  void add(CLI::App& app) {
    app.add_option("--config", config_file, "JSON file with dataset, schema, predictor, method, k, seed, trace")
        ->check(CLI::ExistingFile);
    dataset_opt = app.add_option("--dataset", dataset, "CSV with schema attributes plus the target column");
    schema_opt = app.add_option("--schema", schema, "Attribute schema JSON");
    predictor_opt = app.add_option("--predictor", predictor,
                                   "knn[:K] | URL | remote (uses $COMPARABLES_PREDICTOR_URL) | synthetic:PATH | {json}");
  }

  json file() const { return config_file.empty() ? json::object() : json::parse(read_text(config_file)); }
  fs::path base() const { return config_file.empty() ? fs::path{} : fs::path(config_file).parent_path(); }
};

PredictorSpec resolve_predictor(const ModelFlags& f, const json& file) {
  const char* env = std::getenv(kPredictorUrlEnv);
  const std::string env_url = env ? env : "";
  auto remote_from_env = [&] {
    if (env_url.empty())
      throw ConfigError(std::string("predictor 'remote' needs ") + kPredictorUrlEnv + " to be set");
    return PredictorSpec::parse(env_url);
  };
  if (f.predictor_opt->count()) return f.predictor == "remote" ? remote_from_env() : PredictorSpec::parse(f.predictor);
  if (!env_url.empty()) return PredictorSpec::parse(env_url);
  if (file.contains("predictor")) {
    const auto& p = file.at("predictor");
    if (p.is_string()) return p.get<std::string>() == "remote" ? remote_from_env() : PredictorSpec::parse(p.get<std::string>());
    if (p.is_object() && p.value("kind", "") == "remote" && !p.contains("url")) return remote_from_env();
    return PredictorSpec::from_json(p.dump());
  }
  return PredictorSpec::parse("knn");
}

struct LoadedModel {
  ServiceDataset data;
  PredictorSpec spec;
};

LoadedModel load_model(const ModelFlags& f, const json& file) {
  auto path_of = [&](const CLI::Option* opt, const std::string& flag, const char* key) -> fs::path {
    if (opt->count()) return flag;
    if (file.contains(key)) return f.base() / file.at(key).get<std::string>();
    throw ConfigError(std::string("--") + key + " is required");
  };
  const fs::path dataset = path_of(f.dataset_opt, f.dataset, "dataset");
  const fs::path schema = path_of(f.schema_opt, f.schema, "schema");
  const auto spec = resolve_predictor(f, file);
  auto s = load_schema(schema);
  auto ds = load_csv(dataset, s);
  auto st = fit_standardizer(ds);
  auto p = make_predictor(spec, ds, st);
  return {{dataset.stem().string(), std::move(ds), std::move(st), std::move(p)}, spec};
}

struct TraceFlags {
  double lf = 0, ls = 0, ld = 0, lm = 0, le = 0, delta = 0;
  std::size_t segments = 0;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& app) {
    opts = {app.add_option("--lambda-f", lf, "Faithfulness weight"),
            app.add_option("--lambda-s", ls, "Sparsity weight"),
            app.add_option("--lambda-d", ld, "Disjointness weight"),
            app.add_option("--lambda-m", lm, "Monotonicity weight"),
            app.add_option("--lambda-e", le, "Evenness weight"),
            app.add_option("--delta", delta, "Attribute-change threshold (standardized units)"),
            app.add_option("--segments", segments, "Trace segments (0 = automatic)")};
  }

  void apply(DesiderataConfig& c) const {
    if (opts[0]->count()) c.lambda_f = lf;
    if (opts[1]->count()) c.lambda_s = ls;
    if (opts[2]->count()) c.lambda_d = ld;
    if (opts[3]->count()) c.lambda_m = lm;
    if (opts[4]->count()) c.lambda_e = le;
    if (opts[5]->count()) c.delta = delta;
    if (opts[6]->count()) c.segments = segments;
  }
};

Method method_or_fail(const std::string& name) {
  const auto m = parse_method(name);
  if (!m)
    throw ConfigError("unknown method '" + name + "' (valid: comparables, regression, linear-adjust, trace)");
  return *m;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_text(out, text.back() == '\n' ? text : text + '\n');
  }
}

json summary_json(const EvalReport& r) {
  json cells = json::array();
  for (const auto& c : r.summary())
    cells.push_back({{"method", method_name(c.method)},
                     {"axis_value", c.axis_value},
                     {"count", c.count},
                     {"prediction_error", c.prediction_error},
                     {"unfaithfulness", c.unfaithfulness},
                     {"bounds_width", c.bounds_width}});
  return cells;
}

std::string summary_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "method,axis_value,count,prediction_error,unfaithfulness,bounds_width\n";
  char buf[256];
  for (const auto& c : r.summary()) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%zu,%.10g,%.10g,%.10g\n", std::string(method_name(c.method)).c_str(),
                  c.axis_value, c.count, c.prediction_error, c.unfaithfulness, c.bounds_width);
    os << buf;
  }
  return os.str();
}

std::string sensitivity_summary_csv(const SensitivityReport& r) {
  std::ostringstream os;
  os << "vary,lambda,n,unfaithfulness_mean,unfaithfulness_sd,adjustments_mean,adjustments_sd,reversals_mean,"
        "reversals_sd,unevenness_mean,unevenness_sd\n";
  char buf[512];
  for (const auto& s : r.summary) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.vary.c_str(),
                  s.lambda, s.n, s.unfaithfulness_mean, s.unfaithfulness_sd, s.adjustments_mean, s.adjustments_sd,
                  s.reversals_mean, s.reversals_sd, s.unevenness_mean, s.unevenness_sd);
    os << buf;
  }
  return os.str();
}

json sensitivity_summary_json(const SensitivityReport& r) {
  json rows = json::array();
  for (const auto& s : r.summary)
    rows.push_back({{"lambda", s.lambda},
                    {"n", s.n},
                    {"unfaithfulness_mean", s.unfaithfulness_mean},
                    {"unfaithfulness_sd", s.unfaithfulness_sd},
                    {"adjustments_mean", s.adjustments_mean},
                    {"adjustments_sd", s.adjustments_sd},
                    {"reversals_mean", s.reversals_mean},
                    {"reversals_sd", s.reversals_sd},
                    {"unevenness_mean", s.unevenness_mean},
                    {"unevenness_sd", s.unevenness_sd}});
  return rows;
}

fs::path report_prefix(const std::string& out, const std::string& spec, const char* suffix) {
  if (!out.empty()) return out;
  return fs::path(spec).stem().string() + suffix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Comparables-based explanations for AI predictions"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string method = "comparables", subject, out, format = "json", host = "127.0.0.1", session_log;
  std::size_t k = 2, threads = 8;
  std::uint64_t seed = 0;
  int port = 8080;

  // explain
  auto* explain = app.add_subcommand("explain", "Explain the AI prediction for one subject");
  ModelFlags explain_model;
  explain_model.add(*explain);
  TraceFlags explain_trace;
  explain_trace.add(*explain);
  auto* method_opt = explain->add_option("--method", method, "comparables | regression | linear-adjust | trace");
  auto* k_opt = explain->add_option("--k", k, "Number of comparables");
  auto* explain_seed = explain->add_option("--seed", seed, "Random seed");
  explain->add_option("--subject", subject, "Row id in the dataset, or a JSON object of attribute values")->required();
  explain->add_option("--out", out, "Write the explanation here instead of stdout");
  explain->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run a prediction-error / unfaithfulness sweep");
  std::string eval_spec;
  evaluate->add_option("spec", eval_spec, "Sweep spec JSON")->required()->check(CLI::ExistingFile);
  std::string eval_predictor;
  auto* eval_predictor_opt = evaluate->add_option("--predictor", eval_predictor, "Override the spec's predictor");
  TraceFlags eval_trace;
  eval_trace.add(*evaluate);
  auto* eval_seed = evaluate->add_option("--seed", seed, "Run a single seed instead of the spec's list");
  evaluate->add_option("--out", out, "Report path prefix (writes PREFIX.csv and PREFIX.json)");
  evaluate->add_option("--format", format, "Format of the summary on stdout")->check(CLI::IsMember({"json", "csv"}));

  // sensitivity
  auto* sensitivity = app.add_subcommand("sensitivity", "Sweep one desiderata weight");
  std::string sens_spec;
  sensitivity->add_option("spec", sens_spec, "Sensitivity spec JSON")->required()->check(CLI::ExistingFile);
  TraceFlags sens_trace;
  sens_trace.add(*sensitivity);
  auto* sens_seed = sensitivity->add_option("--seed", seed, "Run a single seed instead of the spec's list");
  sensitivity->add_option("--out", out, "Report path prefix (writes PREFIX.csv and PREFIX.json)");
  sensitivity->add_option("--format", format, "Format of the summary on stdout")->check(CLI::IsMember({"json", "csv"}));

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  ModelFlags serve_model;
  serve_model.add(*serve);
  auto* port_opt = serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--session-log", session_log, "Append-only JSON-lines session log");
  serve->add_option("--threads", threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (explain->parsed()) {
      if (format != "json") throw ConfigError("explain emits JSON only");
      const json file = explain_model.file();
      ExplainRequest req;
      req.method = method_or_fail(method_opt->count() ? method : file.value("method", method));
      auto model = load_model(explain_model, file);
      req.k = k_opt->count() ? k : file.value("k", k);
      req.seed = explain_seed->count() ? seed : file.value("seed", seed);
      if (file.contains("trace")) apply_config_overrides(req.config, file.at("trace").dump());
      explain_trace.apply(req.config);

      const auto& d = model.data;
      std::optional<std::size_t> row;
      Instance x;
      if (!subject.empty() && subject.front() == '{') {
        x = instance_from_json(d.dataset.schema, subject);
      } else {
        row = d.dataset.find(subject);
        if (!row) throw Error(ErrorCode::InvalidArgument, "no row with id '" + subject + "'");
        x = d.dataset.rows[*row].instance;
      }
      ExplainContext ctx{d.id, d.dataset, d.std, *d.predictor, nullptr};
      emit(explain_document(ctx, x, row, req), out);
      return kOk;
    }

    if (evaluate->parsed()) {
      auto spec = parse_sweep_spec(read_text(eval_spec), fs::path(eval_spec).parent_path());
      const char* env = std::getenv(kPredictorUrlEnv);
      if (eval_predictor_opt->count()) {
        if (eval_predictor == "remote" && !(env && *env))
          throw ConfigError(std::string("predictor 'remote' needs ") + kPredictorUrlEnv + " to be set");
        spec.predictor = PredictorSpec::parse(eval_predictor == "remote" ? env : eval_predictor);
      } else if (env && *env) {
        spec.predictor = PredictorSpec::parse(env);
      }
      eval_trace.apply(spec.trace);
      if (eval_seed->count()) spec.seeds = {seed};
      spec.validate();
      const auto report = run_sweep(spec);
      const auto prefix = report_prefix(out, eval_spec, "_report");
      write_text(prefix.string() + ".csv", report.to_csv());
      write_text(prefix.string() + ".json", report.to_json());
      std::cerr << "wrote " << prefix.string() << ".csv and .json (" << report.cells.size() << " cells)\n";
      if (format == "csv") {
        std::cout << summary_csv(report);
      } else {
        json seeds = spec.seeds;
        std::cout << json{{"seeds", seeds}, {"summary", summary_json(report)}}.dump(2) << '\n';
      }
      return kOk;
    }

    if (sensitivity->parsed()) {
      auto spec = parse_sensitivity_spec(read_text(sens_spec));
      sens_trace.apply(spec.base);
      if (sens_seed->count()) spec.seeds = {seed};
      spec.validate();
      const auto report = run_sensitivity(spec);
      const auto prefix = report_prefix(out, sens_spec, "_sensitivity");
      write_text(prefix.string() + ".csv", report.to_csv());
      write_text(prefix.string() + ".json", report.to_json());
      std::cerr << "wrote " << prefix.string() << ".csv and .json (" << report.rows.size() << " rows)\n";
      if (format == "csv") {
        std::cout << sensitivity_summary_csv(report);
      } else {
        json seeds = spec.seeds;
        std::cout << json{{"vary", report.vary}, {"seeds", seeds}, {"summary", sensitivity_summary_json(report)}}.dump(2)
                  << '\n';
      }
      return kOk;
    }

    if (serve->parsed()) {
      const json file = serve_model.file();
      auto model = load_model(serve_model, file);
      ServiceOptions opt;
      opt.host = host;
      opt.port = port_opt->count() ? port : file.value("port", port);
      opt.session_log = session_log;
      opt.threads = threads;

      // Block the stop signals before any thread starts so only the waiter sees them.
      sigset_t stop_signals;
      sigemptyset(&stop_signals);
      sigaddset(&stop_signals, SIGINT);
      sigaddset(&stop_signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

      std::vector<ServiceDataset> datasets;
      datasets.push_back(std::move(model.data));
      Service svc(std::move(datasets), opt);
      int bound = 0;
      try {
        bound = svc.bind();
      } catch (const Error& e) {
        std::cerr << "cxai: " << e.what() << '\n';
        return kBind;
      }
      std::cout << json{{"host", opt.host}, {"port", bound}, {"predictor", model.spec.to_json()}}.dump() << std::endl;
      std::cerr << "listening on " << opt.host << ':' << bound << '\n';

      std::atomic<bool> signalled{false};
      std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        if (signalled.exchange(true)) return;
        std::cerr << "signal " << sig << ", shutting down\n";
        svc.stop();
      });
      svc.run();
      if (!signalled.exchange(true)) pthread_kill(waiter.native_handle(), SIGTERM);
      waiter.join();
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "cxai: " << e.what() << '\n';
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "cxai: " << e.what() << '\n';
    return exit_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "cxai: bad JSON: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "cxai: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
