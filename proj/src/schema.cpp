#include "cxai/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cxai {

using json = nlohmann::json;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DegenerateAttribute: return "DegenerateAttribute";
    case ErrorCode::UnknownLevel: return "UnknownLevel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NoDifference: return "NoDifference";
    case ErrorCode::ZeroWidthInterval: return "ZeroWidthInterval";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::RemoteProtocol: return "RemoteProtocol";
  }
  return "Unknown";
}

std::optional<std::size_t> AttributeDef::level_index(const std::string& value) const {
  if (is_numeric()) return std::nullopt;
  const auto& levels = categorical().levels;
  auto it = std::find(levels.begin(), levels.end(), value);
  if (it == levels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - levels.begin());
}

void AttributeSchema::validate() const {
  if (attributes.empty()) throw Error(ErrorCode::InvalidSchema, "schema has no attributes");
  std::set<std::string> seen;
  for (const auto& a : attributes) {
    if (a.name.empty()) throw Error(ErrorCode::InvalidSchema, "attribute with empty name");
    if (!seen.insert(a.name).second)
      throw Error(ErrorCode::InvalidSchema, "duplicate attribute '" + a.name + "'");
    if (a.display_precision < 0)
      throw Error(ErrorCode::InvalidSchema, "negative display_precision on '" + a.name + "'");
    if (a.is_categorical()) {
      const auto& levels = a.categorical().levels;
      std::set<std::string> distinct(levels.begin(), levels.end());
      if (distinct.size() < 2 || distinct.size() != levels.size())
        throw Error(ErrorCode::InvalidSchema,
                    "categorical '" + a.name + "' needs at least two distinct levels");
    }
  }
  if (target_name.empty()) throw Error(ErrorCode::InvalidSchema, "empty target_name");
  if (seen.count(target_name))
    throw Error(ErrorCode::InvalidSchema, "target '" + target_name + "' collides with an attribute");
}

std::optional<std::size_t> AttributeSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i)
    if (attributes[i].name == name) return i;
  return std::nullopt;
}

AttributeSchema parse_schema(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSchema, std::string("schema is not valid JSON: ") + e.what());
  }
  AttributeSchema schema;
  try {
    schema.target_name = doc.at("target_name").get<std::string>();
    schema.target_unit = doc.value("target_unit", std::string{});
    for (const auto& a : doc.at("attributes")) {
      AttributeDef def;
      def.name = a.at("name").get<std::string>();
      def.display_precision = a.value("display_precision", 2);
      const auto kind = a.at("kind").get<std::string>();
      if (kind == "numeric") {
        def.kind = NumericKind{a.value("unit", std::string{})};
      } else if (kind == "categorical") {
        def.kind = CategoricalKind{a.at("levels").get<std::vector<std::string>>()};
      } else {
        throw Error(ErrorCode::InvalidSchema, "unknown kind '" + kind + "' on '" + def.name + "'");
      }
      schema.attributes.push_back(std::move(def));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSchema, e.what());
  }
  schema.validate();
  return schema;
}

AttributeSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open schema " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

std::string schema_to_json(const AttributeSchema& schema) {
  json doc;
  doc["target_name"] = schema.target_name;
  doc["target_unit"] = schema.target_unit;
  doc["attributes"] = json::array();
  for (const auto& a : schema.attributes) {
    json j{{"name", a.name}, {"display_precision", a.display_precision}};
    if (a.is_numeric()) {
      j["kind"] = "numeric";
      j["unit"] = std::get<NumericKind>(a.kind).unit;
    } else {
      j["kind"] = "categorical";
      j["levels"] = a.categorical().levels;
    }
    doc["attributes"].push_back(std::move(j));
  }
  return doc.dump(2);
}

void check_conforms(const AttributeSchema& schema, const Instance& x) {
  if (x.values.size() != schema.size())
    throw Error(ErrorCode::DimensionMismatch,
                "instance has " + std::to_string(x.values.size()) + " values, schema has " +
                    std::to_string(schema.size()));
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& def = schema.attributes[i];
    if (def.is_numeric()) {
      const double* v = std::get_if<double>(&x.values[i]);
      if (!v || !std::isfinite(*v))
        throw Error(ErrorCode::ParseError, "attribute '" + def.name + "' needs a finite number");
    } else {
      const std::string* v = std::get_if<std::string>(&x.values[i]);
      if (!v || !def.level_index(*v))
        throw Error(ErrorCode::UnknownLevel,
                    "attribute '" + def.name + "' has no level '" + (v ? *v : "<number>") + "'");
    }
  }
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].instance.id && *rows[i].instance.id == id) return i;
  return std::nullopt;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_number(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

Dataset parse_csv(const std::string& text, const AttributeSchema& schema, std::string provenance) {
  schema.validate();
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // Strip a UTF-8 byte order mark.
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  if (lines.empty()) throw Error(ErrorCode::EmptyDataset, "no header row");

  std::vector<std::string> header = split_csv_line(lines[0]);
  for (auto& h : header) h = trim(h);
  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> attr_cols;
  for (const auto& def : schema.attributes) {
    auto col = column_of(def.name);
    if (!col) throw Error(ErrorCode::MissingColumn, def.name);
    attr_cols.push_back(*col);
  }
  auto target_col = column_of(schema.target_name);
  if (!target_col) throw Error(ErrorCode::MissingColumn, schema.target_name);
  auto id_col = column_of("id");

  Dataset ds;
  ds.schema = schema;
  ds.provenance = std::move(provenance);
  std::size_t data_row = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    auto cells = split_csv_line(lines[li]);
    auto fail = [&](const std::string& column, const std::string& why) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(data_row + 1) + " (line " +
                                             std::to_string(li + 1) + "), column '" +
                                             column + "': " + why);
    };
    if (cells.size() != header.size())
      fail("*", "expected " + std::to_string(header.size()) + " cells, found " +
                    std::to_string(cells.size()));
    Row row;
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const auto& def = schema.attributes[a];
      std::string cell = trim(cells[attr_cols[a]]);
      if (cell.empty()) fail(def.name, "missing value");
      if (def.is_numeric()) {
        auto v = parse_number(cell);
        if (!v) fail(def.name, "'" + cell + "' is not a finite number");
        row.instance.values.emplace_back(*v);
      } else {
        if (!def.level_index(cell)) fail(def.name, "'" + cell + "' is not a declared level");
        row.instance.values.emplace_back(cell);
      }
    }
    std::string target_cell = trim(cells[*target_col]);
    auto target = parse_number(target_cell);
    if (!target) fail(schema.target_name, "'" + target_cell + "' is not a finite number");
    row.actual_value = *target;
    row.instance.id = id_col ? trim(cells[*id_col]) : std::to_string(data_row);
    ds.rows.push_back(std::move(row));
    ++data_row;
  }
  if (ds.rows.empty()) throw Error(ErrorCode::EmptyDataset, "no data rows");
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const AttributeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema, path.string());
}

FeatureLayout::FeatureLayout(std::vector<FeatureBlock> blocks) : blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) dimension_ = std::max(dimension_, b.offset + b.width);
}

FeatureLayout FeatureLayout::numeric(std::size_t dims) {
  std::vector<FeatureBlock> blocks;
  for (std::size_t i = 0; i < dims; ++i) blocks.push_back({i, 1, false});
  return FeatureLayout(std::move(blocks));
}

FeatureLayout FeatureLayout::from_schema(const AttributeSchema& schema) {
  std::vector<FeatureBlock> blocks;
  std::size_t offset = 0;
  for (const auto& def : schema.attributes) {
    const std::size_t width = def.is_numeric() ? 1 : def.categorical().levels.size();
    blocks.push_back({offset, width, def.is_categorical()});
    offset += width;
  }
  return FeatureLayout(std::move(blocks));
}

double FeatureLayout::distance(std::span<const double> a, std::span<const double> b) const {
  if (a.size() != dimension_ || b.size() != dimension_)
    throw Error(ErrorCode::DimensionMismatch, "distance on vectors of the wrong dimension");
  double d = 0.0;
  for (const auto& blk : blocks_) {
    double part = 0.0;
    for (std::size_t i = blk.offset; i < blk.offset + blk.width; ++i) part += std::abs(a[i] - b[i]);
    d += blk.categorical ? 0.5 * part : part;
  }
  return d;
}

Standardizer::Standardizer(AttributeSchema schema, std::vector<NumericStats> stats,
                           NumericStats target)
    : schema_(std::move(schema)),
      layout_(FeatureLayout::from_schema(schema_)),
      stats_(std::move(stats)),
      target_(target) {
  if (stats_.size() != schema_.size())
    throw Error(ErrorCode::DimensionMismatch, "one NumericStats entry per attribute required");
  for (std::size_t a = 0; a < schema_.size(); ++a)
    if (schema_.attributes[a].is_numeric() && !(stats_[a].std > 0.0))
      throw Error(ErrorCode::DegenerateAttribute, schema_.attributes[a].name);
  if (!(target_.std > 0.0)) throw Error(ErrorCode::InvalidArgument, "target scale must be > 0");
}

double Standardizer::standardize_value(std::size_t attribute, double raw) const {
  return (raw - stats_[attribute].mean) / stats_[attribute].std;
}

double Standardizer::destandardize_value(std::size_t attribute, double z) const {
  return stats_[attribute].mean + z * stats_[attribute].std;
}

Vector Standardizer::standardize(const Instance& x) const {
  check_conforms(schema_, x);
  Vector z(layout_.dimension(), 0.0);
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    const auto& def = schema_.attributes[a];
    const auto& blk = layout_.block(a);
    if (def.is_numeric()) {
      z[blk.offset] = standardize_value(a, std::get<double>(x.values[a]));
    } else {
      z[blk.offset + *def.level_index(std::get<std::string>(x.values[a]))] = 1.0;
    }
  }
  return z;
}

Instance Standardizer::destandardize(std::span<const double> z) const {
  if (z.size() != layout_.dimension())
    throw Error(ErrorCode::DimensionMismatch, "destandardize on a vector of the wrong dimension");
  Instance x;
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    const auto& def = schema_.attributes[a];
    const auto& blk = layout_.block(a);
    if (def.is_numeric()) {
      x.values.emplace_back(destandardize_value(a, z[blk.offset]));
    } else {
      std::size_t best = 0;
      for (std::size_t j = 1; j < blk.width; ++j)
        if (z[blk.offset + j] > z[blk.offset + best]) best = j;
      x.values.emplace_back(def.categorical().levels[best]);
    }
  }
  return x;
}

Standardizer fit_standardizer(const Dataset& dataset) {
  if (dataset.rows.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit on an empty dataset");
  const auto& schema = dataset.schema;
  const double n = static_cast<double>(dataset.rows.size());
  auto population = [&](auto&& value_of) {
    double mean = 0.0;
    for (const auto& r : dataset.rows) mean += value_of(r);
    mean /= n;
    double var = 0.0;
    for (const auto& r : dataset.rows) {
      const double d = value_of(r) - mean;
      var += d * d;
    }
    return NumericStats{mean, std::sqrt(var / n)};
  };

  std::vector<NumericStats> stats(schema.size());
  for (std::size_t a = 0; a < schema.size(); ++a) {
    if (!schema.attributes[a].is_numeric()) continue;
    stats[a] = population([a](const Row& r) { return std::get<double>(r.instance.values[a]); });
    // Relative test so large-magnitude constant columns are still caught.
    if (!(stats[a].std > 1e-12 * std::max(1.0, std::abs(stats[a].mean))))
      throw Error(ErrorCode::DegenerateAttribute, schema.attributes[a].name);
  }
  NumericStats target = population([](const Row& r) { return r.actual_value; });
  if (!(target.std > 0.0)) target.std = 1.0;
  return Standardizer(schema, std::move(stats), target);
}

std::string format_value(const AttributeDef& def, const AttributeValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", def.display_precision, std::get<double>(value));
  return buf;
}

}  // namespace cxai
