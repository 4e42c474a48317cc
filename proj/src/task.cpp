#include "cxai/task.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

namespace {

bool is_synthetic_kind(const std::string& kind) {
  return kind == "linear" || kind == "quadratic" || kind == "sinusoid_plus_linear" ||
         kind == "piecewise_plateau";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t parse_k(std::string_view text) {
  std::size_t k = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw Error(ErrorCode::InvalidArgument, "bad k-NN size '" + std::string(text) + "'");
    k = k * 10 + static_cast<std::size_t>(c - '0');
  }
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k-NN size must be positive");
  return k;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x632be59bd9b4e019ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

PredictorSpec PredictorSpec::parse(std::string_view text) {
  PredictorSpec spec;
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "empty predictor spec");
  if (text.starts_with("http://") || text.starts_with("https://")) {
    spec.kind = Kind::Remote;
    spec.url = std::string(text);
  } else if (text == "knn") {
    spec.kind = Kind::Knn;
  } else if (text.starts_with("knn:")) {
    spec.kind = Kind::Knn;
    spec.k = parse_k(text.substr(4));
  } else if (text.starts_with("synthetic:")) {
    spec.kind = Kind::Synthetic;
    spec.synthetic_json = read_file(std::string(text.substr(10)));
    SyntheticPredictor::from_json(spec.synthetic_json);
  } else if (text.front() == '{') {
    return from_json(std::string(text));
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown predictor '" + std::string(text) + "' (expected knn[:K], a URL, or synthetic:PATH)");
  }
  return spec;
}

PredictorSpec PredictorSpec::from_json(const std::string& text) {
  PredictorSpec spec;
  try {
    const json j = json::parse(text);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "knn") {
      spec.kind = Kind::Knn;
      spec.k = j.value("k", std::size_t{5});
      if (spec.k == 0) throw Error(ErrorCode::InvalidArgument, "k-NN size must be positive");
    } else if (kind == "remote") {
      spec.kind = Kind::Remote;
      spec.url = j.at("url").get<std::string>();
      spec.remote.timeout = std::chrono::milliseconds(j.value("timeout_ms", 10000));
      spec.remote.retries = j.value("retries", 2);
    } else if (kind == "synthetic") {
      spec.kind = Kind::Synthetic;
      spec.synthetic_json = j.at("model").dump();
    } else if (is_synthetic_kind(kind)) {
      spec.kind = Kind::Synthetic;
      spec.synthetic_json = j.dump();
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown predictor kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad predictor spec: ") + e.what());
  }
  if (spec.kind == Kind::Synthetic) SyntheticPredictor::from_json(spec.synthetic_json);
  return spec;
}

std::string PredictorSpec::to_json() const {
  json j;
  switch (kind) {
    case Kind::Knn: j = {{"kind", "knn"}, {"k", k}}; break;
    case Kind::Remote:
      j = {{"kind", "remote"}, {"url", url}, {"timeout_ms", remote.timeout.count()}, {"retries", remote.retries}};
      break;
    case Kind::Synthetic: j = {{"kind", "synthetic"}, {"model", json::parse(synthetic_json)}}; break;
  }
  return j.dump();
}

PredictorPtr make_predictor(const PredictorSpec& spec, const Dataset& dataset, const Standardizer& std) {
  switch (spec.kind) {
    case PredictorSpec::Kind::Knn:
      return std::make_shared<KnnRegressor>(fit_knn(dataset, std, spec.k));
    case PredictorSpec::Kind::Remote:
      return std::make_shared<RemotePredictor>(spec.url, std.dimension(), spec.remote);
    case PredictorSpec::Kind::Synthetic: {
      auto p = std::make_shared<SyntheticPredictor>(SyntheticPredictor::from_json(spec.synthetic_json));
      if (p->dimension() != std.dimension())
        throw Error(ErrorCode::DimensionMismatch, "synthetic model has " + std::to_string(p->dimension()) +
                                                      " inputs, dataset encodes " +
                                                      std::to_string(std.dimension()));
      return p;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown predictor kind");
}

Dataset make_synthetic_dataset(const SyntheticPredictor& f, std::size_t rows, double noise_std,
                               std::uint64_t seed) {
  if (rows < 2) throw Error(ErrorCode::InvalidArgument, "a synthetic dataset needs at least 2 rows");
  if (noise_std < 0.0) throw Error(ErrorCode::InvalidArgument, "noise_std must be non-negative");
  const std::size_t d = f.dimension();
  Dataset ds;
  for (std::size_t r = 0; r < d; ++r) ds.schema.attributes.push_back({"x" + std::to_string(r), NumericKind{}, 3});
  ds.schema.target_name = "y";
  ds.provenance = "synthetic:" + f.description();
  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < rows; ++i) {
    Row row;
    row.instance.id = "r" + std::to_string(i);
    for (std::size_t r = 0; r < d; ++r) row.instance.values.emplace_back(unit(rng));
    ds.rows.push_back(std::move(row));
  }
  const Standardizer std = fit_standardizer(ds);
  for (auto& row : ds.rows) {
    const double noise = noise_std > 0.0 ? noise_std * unit(rng) : 0.0;
    row.actual_value = f.predict_one(std.standardize(row.instance)) + noise;
  }
  return ds;
}

}  // namespace cxai
