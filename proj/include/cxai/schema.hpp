#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cxai/error.hpp"

namespace cxai {

/// Encoded (standardized, one-hot) feature vector.
using Vector = std::vector<double>;

struct NumericKind {
  std::string unit;
};

struct CategoricalKind {
  std::vector<std::string> levels;
};

struct AttributeDef {
  std::string name;
  std::variant<NumericKind, CategoricalKind> kind;
  int display_precision = 2;

  bool is_numeric() const { return std::holds_alternative<NumericKind>(kind); }
  bool is_categorical() const { return !is_numeric(); }
  const CategoricalKind& categorical() const { return std::get<CategoricalKind>(kind); }
  std::optional<std::size_t> level_index(const std::string& value) const;
};

struct AttributeSchema {
  std::vector<AttributeDef> attributes;
  std::string target_name;
  std::string target_unit;

  /// Throws InvalidSchema when names are empty/duplicated, there are no
  /// attributes, or a categorical attribute has fewer than two distinct levels.
  void validate() const;
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t size() const { return attributes.size(); }
};

AttributeSchema load_schema(const std::filesystem::path& path);
AttributeSchema parse_schema(const std::string& json_text);
std::string schema_to_json(const AttributeSchema& schema);

using AttributeValue = std::variant<double, std::string>;

struct Instance {
  std::vector<AttributeValue> values;
  std::optional<std::string> id;
};

/// Throws ParseError / UnknownLevel when `x` does not conform to `schema`.
void check_conforms(const AttributeSchema& schema, const Instance& x);

struct Row {
  Instance instance;
  double actual_value = 0.0;
};

struct Dataset {
  AttributeSchema schema;
  std::vector<Row> rows;
  std::string provenance;

  std::size_t size() const { return rows.size(); }
  /// Row index whose instance id equals `id`.
  std::optional<std::size_t> find(const std::string& id) const;
};

/// Reads a CSV whose header holds every schema attribute plus the target
/// column. An optional `id` column names the rows; otherwise rows are named by
/// their zero-based index.
/// Parse errors name the 1-based data row and the file line.
Dataset load_csv(const std::filesystem::path& path, const AttributeSchema& schema);
Dataset parse_csv(const std::string& text, const AttributeSchema& schema,
                  std::string provenance = "<memory>");

/// Where one schema attribute lives inside an encoded vector.
struct FeatureBlock {
  std::size_t offset = 0;
  std::size_t width = 1;
  bool categorical = false;
};

/// Encoded-space layout. Numeric attributes occupy one coordinate; a
/// categorical attribute occupies a one-hot block treated as a unit.
class FeatureLayout {
 public:
  FeatureLayout() = default;
  explicit FeatureLayout(std::vector<FeatureBlock> blocks);
  static FeatureLayout numeric(std::size_t dims);
  static FeatureLayout from_schema(const AttributeSchema& schema);

  std::size_t attribute_count() const { return blocks_.size(); }
  std::size_t dimension() const { return dimension_; }
  const FeatureBlock& block(std::size_t attribute) const { return blocks_[attribute]; }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }

  /// Manhattan distance where a one-hot block contributes half its L1
  /// difference, so a single level switch counts as one standardized unit.
  double distance(std::span<const double> a, std::span<const double> b) const;

 private:
  std::vector<FeatureBlock> blocks_;
  std::size_t dimension_ = 0;
};

struct NumericStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Training-set z-scoring for numeric attributes, one-hot for categorical ones,
/// and the target's location/scale.
class Standardizer {
 public:
  Standardizer(AttributeSchema schema, std::vector<NumericStats> stats, NumericStats target);

  const AttributeSchema& schema() const { return schema_; }
  const FeatureLayout& layout() const { return layout_; }
  std::size_t dimension() const { return layout_.dimension(); }
  /// Per-attribute statistics; categorical entries are unused (0, 1).
  const std::vector<NumericStats>& stats() const { return stats_; }
  const NumericStats& target() const { return target_; }

  Vector standardize(const Instance& x) const;
  /// Numeric components are unscaled; each one-hot block is decoded to its
  /// largest entry (first level on ties).
  Instance destandardize(std::span<const double> z) const;

  double standardize_value(std::size_t attribute, double raw) const;
  double destandardize_value(std::size_t attribute, double z) const;

 private:
  AttributeSchema schema_;
  FeatureLayout layout_;
  std::vector<NumericStats> stats_;
  NumericStats target_;
};

/// Population mean/std per numeric attribute. DegenerateAttribute on a
/// constant numeric column; a constant target falls back to unit scale.
Standardizer fit_standardizer(const Dataset& dataset);

/// Attribute value rendered as text (numbers with the attribute's precision).
std::string format_value(const AttributeDef& def, const AttributeValue& value);

}  // namespace cxai
