#include "cxai/service.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string error;
  std::string detail;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::RemoteUnavailable:
    case ErrorCode::RemoteProtocol: return 502;
    case ErrorCode::Io:
    case ErrorCode::Diverged: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  send_json(res, e.status, {{"error", e.error}, {"code", e.status}, {"detail", e.detail}});
}

// Runs a handler, turning library errors and malformed JSON into error bodies.
template <class F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const HttpError& e) {
    send_error(res, e);
  } catch (const Error& e) {
    send_error(res, {status_for(e.code()), std::string(to_string(e.code())), e.detail()});
  } catch (const json::exception& e) {
    send_error(res, {400, "BadRequest", e.what()});
  } catch (const std::exception& e) {
    send_error(res, {500, "Internal", e.what()});
  }
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw HttpError{400, "BadRequest", "request body must be a JSON object"};
    return j;
  } catch (const json::parse_error& e) {
    throw HttpError{400, "BadRequest", std::string("request body is not JSON: ") + e.what()};
  }
}

json metrics_json(const DecisionMetrics& m) {
  return {{"mean_error_log", m.mean_error_log},
          {"credible_interval_log", m.credible_interval_log},
          {"density", m.density},
          {"zero_error", m.zero_error}};
}

std::string mode_name(SessionMode m) { return m == SessionMode::Practice ? "practice" : "main"; }

SessionMode parse_mode(const std::string& s) {
  if (s == "practice") return SessionMode::Practice;
  if (s == "main") return SessionMode::Main;
  throw HttpError{400, "BadRequest", "mode must be 'practice' or 'main'"};
}

json case_json(const CaseResult& c) {
  return {{"case", c.subject},
          {"method", c.method},
          {"k", c.k},
          {"y_min", c.response.y_min},
          {"y_max", c.response.y_max},
          {"actual", c.response.actual},
          {"metrics", metrics_json(c.metrics)}};
}

}  // namespace

bool interval_too_wide(const DecisionResponse& r) { return r.y_max - r.y_min > 0.2 * std::abs(r.actual); }

Service::Service(std::vector<ServiceDataset> datasets, ServiceOptions options)
    : datasets_(std::move(datasets)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const std::size_t threads = std::max<std::size_t>(1, options_.threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  // SO_REUSEPORT (the library default) would let a second server share a busy port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  replay_sessions();
  routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
    if (port_ < 0) throw Error(ErrorCode::Io, "cannot bind " + options_.host);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port))
      throw Error(ErrorCode::Io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    port_ = options_.port;
  }
  return port_;
}

void Service::run() {
  started_ = true;
  if (!stopping_) server_->listen_after_bind();
  finished_ = true;
}

void Service::stop() {
  stopping_ = true;
  if (!server_ || !started_) return;
  // run() may not have entered the accept loop yet.
  while (!server_->is_running() && !finished_) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  server_->stop();
}

const ServiceDataset* Service::find_dataset(const std::string& id) const {
  for (const auto& d : datasets_)
    if (d.id == id) return &d;
  return nullptr;
}

std::optional<SessionRecord> Service::session(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

void Service::append_log(const std::string& line) {
  if (options_.session_log.empty()) return;
  std::ofstream out(options_.session_log, std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + options_.session_log.string());
  out << line << '\n';
}

void Service::replay_sessions() {
  if (options_.session_log.empty() || !std::filesystem::exists(options_.session_log)) return;
  std::ifstream in(options_.session_log);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;  // a torn final line from an interrupted write
    }
    const auto type = j.value("type", "");
    if (type == "session") {
      SessionRecord s;
      s.id = j.at("id").get<std::string>();
      s.dataset = j.at("dataset").get<std::string>();
      s.mode = parse_mode(j.at("mode").get<std::string>());
      const auto n = std::strtoull(s.id.c_str() + 1, nullptr, 10);
      next_session_ = std::max<std::size_t>(next_session_, static_cast<std::size_t>(n) + 1);
      sessions_[s.id] = std::move(s);
    } else if (type == "response") {
      const auto it = sessions_.find(j.at("session").get<std::string>());
      if (it == sessions_.end()) continue;
      CaseResult c;
      c.subject = j.at("case").get<std::string>();
      c.method = j.value("method", "");
      c.k = j.value("k", std::size_t{0});
      c.response = {j.at("y_min").get<double>(), j.at("y_max").get<double>(), j.at("actual").get<double>()};
      c.metrics = decision_metrics(c.response);
      it->second.cases.push_back(std::move(c));
    }
  }
}

void Service::routes() {
  auto& s = *server_;
  s.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header(kApiVersionHeader, kApiVersion);
  });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string what = res.status == 404 ? "NotFound" : "HttpError";
      send_error(res, {res.status, what, req.method + " " + req.path});
    }
  });

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

  s.Get("/datasets", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& d : datasets_) {
      json attrs = json::array();
      for (const auto& a : d.dataset.schema.attributes) attrs.push_back(a.name);
      list.push_back({{"id", d.id},
                      {"rows", d.dataset.size()},
                      {"attributes", attrs},
                      {"schema", json::parse(schema_to_json(d.dataset.schema))},
                      {"target_name", d.dataset.schema.target_name},
                      {"predictor", d.predictor->description()}});
    }
    send_json(res, 200, {{"datasets", list}});
  });

  s.Get(R"(/datasets/([^/]+)/subjects)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto* d = find_dataset(req.matches[1]);
      if (!d) throw HttpError{404, "NotFound", "unknown dataset '" + std::string(req.matches[1]) + "'"};
      json rows = json::array();
      const auto& schema = d->dataset.schema;
      for (std::size_t i = 0; i < d->dataset.size(); ++i) {
        const auto& r = d->dataset.rows[i];
        json values = json::object();
        for (std::size_t a = 0; a < schema.size(); ++a)
          values[schema.attributes[a].name] = std::holds_alternative<double>(r.instance.values[a])
                                                  ? json(std::get<double>(r.instance.values[a]))
                                                  : json(std::get<std::string>(r.instance.values[a]));
        rows.push_back({{"id", r.instance.id.value_or(std::to_string(i))}, {"attributes", values}, {"actual_value", r.actual_value}});
      }
      send_json(res, 200, {{"dataset", d->id}, {"count", rows.size()}, {"subjects", rows}});
    });
  });

  s.Post("/explain", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      const ServiceDataset* d = nullptr;
      if (body.contains("dataset")) {
        d = find_dataset(body.at("dataset").get<std::string>());
        if (!d) throw HttpError{404, "NotFound", "unknown dataset '" + body.at("dataset").get<std::string>() + "'"};
      } else if (datasets_.size() == 1) {
        d = &datasets_.front();
      } else {
        throw HttpError{400, "BadRequest", "request must name a dataset"};
      }

      ExplainRequest er;
      const auto method_text = body.value("method", std::string("comparables"));
      const auto method = parse_method(method_text);
      if (!method)
        throw HttpError{400, "BadRequest",
                        "unknown method '" + method_text + "' (expected comparables, regression, linear-adjust or trace)"};
      er.method = *method;
      if (body.contains("k")) {
        if (!body.at("k").is_number_integer() || body.at("k").get<long long>() < 1)
          throw HttpError{400, "BadRequest", "k must be a positive integer"};
        er.k = body.at("k").get<std::size_t>();
      }
      if (body.contains("config")) apply_config_overrides(er.config, body.at("config").dump());
      er.seed = body.value("seed", std::uint64_t{0});

      if (!body.contains("subject")) throw HttpError{400, "BadRequest", "request must name a subject"};
      const auto& subj = body.at("subject");
      Instance subject;
      std::optional<std::size_t> row;
      if (subj.is_string()) {
        row = d->dataset.find(subj.get<std::string>());
        if (!row) throw HttpError{404, "NotFound", "unknown subject '" + subj.get<std::string>() + "'"};
        subject = d->dataset.rows[*row].instance;
      } else {
        subject = instance_from_json(d->dataset.schema, subj.dump());
      }
      ExplainContext ctx{d->id, d->dataset, d->std, *d->predictor, &cache_};
      res.status = 200;
      res.set_content(explain_document(ctx, subject, row, er), "application/json");
    });
  });

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      SessionRecord rec;
      if (body.contains("dataset")) rec.dataset = body.at("dataset").get<std::string>();
      else if (datasets_.size() == 1) rec.dataset = datasets_.front().id;
      if (!find_dataset(rec.dataset)) throw HttpError{404, "NotFound", "unknown dataset '" + rec.dataset + "'"};
      rec.mode = parse_mode(body.value("mode", std::string("practice")));
      std::lock_guard lock(sessions_mu_);
      rec.id = "s" + std::to_string(next_session_++);
      append_log(json{{"type", "session"}, {"id", rec.id}, {"dataset", rec.dataset}, {"mode", mode_name(rec.mode)}}.dump());
      const json out{{"id", rec.id}, {"dataset", rec.dataset}, {"mode", mode_name(rec.mode)}};
      sessions_[rec.id] = std::move(rec);
      send_json(res, 201, out);
    });
  });

  s.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto rec = session(req.matches[1]);
      if (!rec) throw HttpError{404, "NotFound", "unknown session '" + std::string(req.matches[1]) + "'"};
      json cases = json::array();
      for (const auto& c : rec->cases) cases.push_back(case_json(c));
      send_json(res, 200, {{"id", rec->id}, {"dataset", rec->dataset}, {"mode", mode_name(rec->mode)}, {"cases", cases}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const json body = parse_body(req);
      std::lock_guard lock(sessions_mu_);
      const auto it = sessions_.find(id);
      if (it == sessions_.end()) throw HttpError{404, "NotFound", "unknown session '" + id + "'"};
      auto& rec = it->second;
      const auto* d = find_dataset(rec.dataset);
      const auto case_id = body.at("case").get<std::string>();
      const auto row = d->dataset.find(case_id);
      if (!row) throw HttpError{404, "NotFound", "unknown case '" + case_id + "'"};

      CaseResult c;
      c.subject = case_id;
      c.method = body.value("method", std::string());
      c.k = body.value("k", std::size_t{0});
      c.response = {body.at("y_min").get<double>(), body.at("y_max").get<double>(), d->dataset.rows[*row].actual_value};
      if (c.response.y_min > c.response.y_max) throw HttpError{400, "InvalidArgument", "y_min exceeds y_max"};
      c.metrics = decision_metrics(c.response);

      json line = case_json(c);
      line["type"] = "response";
      line["session"] = rec.id;
      append_log(line.dump());

      json out{{"session", rec.id},
               {"index", rec.cases.size()},
               {"case", case_id},
               {"mode", mode_name(rec.mode)},
               {"y_min", c.response.y_min},
               {"y_max", c.response.y_max},
               {"y_mean", c.response.y_mean()},
               {"metrics", metrics_json(c.metrics)}};
      if (rec.mode == SessionMode::Practice) {
        const bool within = c.response.actual >= c.response.y_min && c.response.actual <= c.response.y_max;
        out["actual"] = c.response.actual;
        out["verdict"] = within ? "within" : "outside";
        out["too_wide"] = interval_too_wide(c.response);
      }
      rec.cases.push_back(std::move(c));
      send_json(res, 200, out);
    });
  });
}

}  // namespace cxai
