#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "cxai/comparables.hpp"
#include "cxai/trace.hpp"

namespace cxai {

struct ExplainRequest {
  Method method = Method::ComparablesOnly;
  std::size_t k = 2;
  DesiderataConfig config;
  std::uint64_t seed = 0;
};

/// Memoizes trained traces by (dataset, subject, comparable, config digest,
/// seed). Thread-safe.
class TraceCache {
 public:
  std::shared_ptr<const TraceFit> find(const std::string& key) const;
  void insert(const std::string& key, std::shared_ptr<const TraceFit> fit);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const TraceFit>> fits_;
};

struct ExplainContext {
  std::string dataset_id;
  const Dataset& dataset;
  const Standardizer& std;
  const Predictor& predictor;
  TraceCache* cache = nullptr;
};

/// Builds an instance from a JSON object of attribute name -> value (numbers
/// for numeric attributes, level names for categorical ones). Missing or
/// unknown attributes raise ParseError; bad levels UnknownLevel.
Instance instance_from_json(const AttributeSchema& schema, const std::string& json_object);

/// "7.6% lower" / "3.0% higher" / "0.0% higher": the AI prediction relative
/// to the actual value, one decimal.
std::string relative_error_label(double prediction, double actual);

/// The explanation document (format "cxai.explanation", version 1) for one
/// subject: schema, subject and comparable columns with actual values, AI
/// predictions, relative errors and similarities, the reconciled estimate,
/// and method detail (regression factors, per-comparable adjustment
/// breakdowns, or trace steps). A subject given by `subject_row` is excluded
/// from its own comparables.
std::string explain_document(const ExplainContext& ctx, const Instance& subject,
                             std::optional<std::size_t> subject_row, const ExplainRequest& request);

}  // namespace cxai
