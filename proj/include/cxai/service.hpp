#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cxai/evaluation.hpp"
#include "cxai/explain.hpp"

namespace httplib {
class Server;
}

namespace cxai {

inline constexpr const char* kApiVersionHeader = "X-CXAI-Version";
inline constexpr const char* kApiVersion = "1";

struct ServiceDataset {
  std::string id;
  Dataset dataset;
  Standardizer std;
  PredictorPtr predictor;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  /// Append-only JSON-lines session log; empty keeps sessions in memory only.
  std::filesystem::path session_log;
  std::size_t threads = 8;
};

enum class SessionMode { Practice, Main };

struct CaseResult {
  std::string subject;
  std::string method;
  std::size_t k = 0;
  DecisionResponse response;
  DecisionMetrics metrics;
};

struct SessionRecord {
  std::string id;
  std::string dataset;
  SessionMode mode = SessionMode::Practice;
  std::vector<CaseResult> cases;
};

/// Practice feedback rule: the interval is too wide when its width exceeds
/// 20% of |actual| (i.e. more than +/-10% around the actual value).
bool interval_too_wide(const DecisionResponse& r);

/// HTTP JSON API:
///   GET  /health
///   GET  /datasets
///   GET  /datasets/{id}/subjects
///   POST /explain               {dataset, subject, method, k, config, seed}
///   POST /sessions              {dataset, mode: "practice" | "main"}
///   GET  /sessions/{id}
///   POST /sessions/{id}/responses {case, method, k, y_min, y_max}
/// Every response carries X-CXAI-Version; errors are {error, code, detail}.
class Service {
 public:
  Service(std::vector<ServiceDataset> datasets, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the port. Throws Error(Io) when
  /// the address is unavailable.
  int bind();
  /// Serves until stop(); in-flight requests complete before it returns.
  void run();
  void stop();
  int port() const { return port_; }

  const TraceCache& trace_cache() const { return cache_; }
  std::optional<SessionRecord> session(const std::string& id) const;

 private:
  void routes();
  void replay_sessions();
  void append_log(const std::string& line);
  const ServiceDataset* find_dataset(const std::string& id) const;

  std::vector<ServiceDataset> datasets_;
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
  std::atomic<bool> started_{false}, stopping_{false}, finished_{false};
  TraceCache cache_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, SessionRecord> sessions_;
  std::size_t next_session_ = 1;
};

}  // namespace cxai
