#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cxai/predictor.hpp"
#include "cxai/schema.hpp"

namespace cxai {

/// Which black-box model to explain.
///
/// Text form (CLI): `knn`, `knn:K`, `http://...` / `https://...`, or a
/// synthetic model given as inline JSON (`{"kind":"linear",...}`) or
/// `synthetic:PATH` pointing at such a file.
/// JSON form: {"kind": "knn", "k": 5} | {"kind": "remote", "url": ...,
/// "timeout_ms": ..., "retries": ...} | {"kind": "synthetic", "model": {...}}.
struct PredictorSpec {
  enum class Kind { Knn, Remote, Synthetic };
  Kind kind = Kind::Knn;
  std::size_t k = 5;
  std::string url;
  RemoteOptions remote;
  std::string synthetic_json;

  static PredictorSpec parse(std::string_view text);
  static PredictorSpec from_json(const std::string& text);
  std::string to_json() const;
};

/// Builds the predictor; k-NN models are fitted on `dataset`.
PredictorPtr make_predictor(const PredictorSpec& spec, const Dataset& dataset, const Standardizer& std);

/// Dataset whose attributes x0..x{d-1} are drawn from N(0, 1) and whose
/// actual values are f(standardized x) plus N(0, noise_std) noise.
Dataset make_synthetic_dataset(const SyntheticPredictor& f, std::size_t rows, double noise_std,
                               std::uint64_t seed);

/// Deterministic 64-bit mixing used to derive per-job seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace cxai
