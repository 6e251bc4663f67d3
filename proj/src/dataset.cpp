#include "tagcc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tagcc/common.hpp"

namespace tagcc {

namespace {

// Splits one CSV line. Double quotes delimit fields; "" inside a quoted field
// is a literal quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"' && cur.empty()) {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

double parse_numeric_cell(const std::string& cell, const std::string& feature) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    throw ValidationError("non-numeric value '" + cell + "' in numeric column '" +
                          feature + "'");
  }
  if (consumed != cell.size()) {
    throw ValidationError("non-numeric value '" + cell + "' in numeric column '" +
                          feature + "'");
  }
  return v;
}

FeatureSpec::Kind parse_kind(const std::string& s) {
  if (s == "numeric") return FeatureSpec::Kind::numeric;
  if (s == "categorical") return FeatureSpec::Kind::categorical;
  throw ValidationError("feature kind must be 'numeric' or 'categorical', got '" + s +
                        "'");
}

}  // namespace

std::vector<std::size_t> Schema::numeric_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].is_numeric()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Schema::categorical_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i].is_numeric()) out.push_back(i);
  }
  return out;
}

Schema schema_from_json(const nlohmann::json& doc) {
  Schema schema;
  try {
    schema.dataset_name = doc.at("dataset_name").get<std::string>();
    schema.context = doc.value("context", std::string());
    schema.k_star = doc.at("k_star").get<int>();
    for (const auto& f : doc.at("features")) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.kind = parse_kind(f.at("kind").get<std::string>());
      spec.description = f.value("description", std::string());
      if (f.contains("categories")) {
        spec.categories = f.at("categories").get<std::vector<std::string>>();
      }
      schema.features.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema parse failure: ") + e.what());
  }

  if (schema.k_star < 2) {
    throw ValidationError("schema k_star must be >= 2, got " +
                          std::to_string(schema.k_star));
  }
  if (schema.features.empty()) throw ValidationError("schema has no features");

  std::set<std::string> names;
  for (const FeatureSpec& f : schema.features) {
    if (!names.insert(f.name).second) {
      throw ValidationError("duplicate feature name '" + f.name + "'");
    }
    if (!f.is_numeric()) {
      if (f.categories.empty()) {
        throw ValidationError("categorical feature '" + f.name + "' has no categories");
      }
      std::set<std::string> cats(f.categories.begin(), f.categories.end());
      if (cats.size() != f.categories.size()) {
        throw ValidationError("duplicate categories in feature '" + f.name + "'");
      }
    }
  }
  return schema;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json doc;
  doc["dataset_name"] = schema.dataset_name;
  doc["context"] = schema.context;
  doc["k_star"] = schema.k_star;
  doc["features"] = nlohmann::json::array();
  for (const FeatureSpec& f : schema.features) {
    nlohmann::json fj;
    fj["name"] = f.name;
    fj["kind"] = f.is_numeric() ? "numeric" : "categorical";
    fj["description"] = f.description;
    if (!f.is_numeric()) fj["categories"] = f.categories;
    doc["features"].push_back(std::move(fj));
  }
  return doc;
}

Schema load_schema(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema parse failure in " + path.string() + ": " + e.what());
  }
  return schema_from_json(doc);
}

std::string schema_fingerprint(const Schema& schema) {
  return hash_hex(schema_to_json(schema).dump());
}

bool is_missing_cell(const std::string& cell) { return cell.empty() || cell == "?"; }

bool row_has_missing(const std::vector<std::string>& cells) {
  return std::any_of(cells.begin(), cells.end(),
                     [](const std::string& c) { return is_missing_cell(c); });
}

RawTable load_table(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file: " + path.string());

  RawTable table;
  std::string line;
  int line_no = 0;
  int row_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);

    if (line_no == 1 && cells.size() == schema.feature_count()) {
      bool is_header = true;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] != schema.features[i].name) {
          is_header = false;
          break;
        }
      }
      if (is_header) continue;
    }

    if (cells.size() != schema.feature_count()) {
      throw ValidationError("row " + std::to_string(line_no) + " in " + path.string() +
                            " has " + std::to_string(cells.size()) + " cells, schema has " +
                            std::to_string(schema.feature_count()) + " features");
    }
    table.row_ids.push_back(row_id++);
    table.rows.push_back(std::move(cells));
  }
  return table;
}

RawTable drop_missing(const RawTable& table) {
  RawTable out;
  for (std::size_t i = 0; i < table.n(); ++i) {
    if (!row_has_missing(table.rows[i])) {
      out.row_ids.push_back(table.row_ids[i]);
      out.rows.push_back(table.rows[i]);
    }
  }
  return out;
}

std::string row_content_hash(const std::vector<std::string>& cells) {
  std::string joined;
  for (const std::string& c : cells) {
    joined += c;
    joined.push_back('\x1f');
  }
  return hash_hex(joined);
}

EncodedDataset encode(const RawTable& table, const Schema& schema) {
  for (std::size_t i = 0; i < table.n(); ++i) {
    if (row_has_missing(table.rows[i])) {
      throw ValidationError("encode: row " + std::to_string(table.row_ids[i]) +
                            " contains a missing value");
    }
  }

  EncodedDataset ds;
  ds.n = table.n();
  ds.row_ids = table.row_ids;
  ds.numeric_feature_positions = schema.numeric_positions();
  ds.categorical_feature_positions = schema.categorical_positions();

  const std::size_t num_cols = ds.numeric_count();
  const std::size_t cat_cols = ds.categorical_count();
  ds.numeric_values = Tensor(ds.n, num_cols);
  ds.categorical_indices.assign(ds.n * cat_cols, 0);
  ds.standardization_stats.resize(num_cols);

  for (std::size_t j = 0; j < num_cols; ++j) {
    const std::size_t pos = ds.numeric_feature_positions[j];
    const FeatureSpec& feature = schema.features[pos];
    std::vector<double> col(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
      col[i] = parse_numeric_cell(table.rows[i][pos], feature.name);
    }
    double mean = 0.0;
    for (double v : col) mean += v;
    if (ds.n > 0) mean /= static_cast<double>(ds.n);
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    if (ds.n > 0) var /= static_cast<double>(ds.n);
    const double stddev = std::sqrt(var);

    StandardizationStats stats;
    stats.mean = mean;
    stats.stddev = stddev < 1e-12 ? 0.0 : stddev;
    ds.standardization_stats[j] = stats;
    for (std::size_t i = 0; i < ds.n; ++i) {
      ds.numeric_values.at(i, j) = apply_standardization(stats, col[i]);
    }
  }

  for (std::size_t j = 0; j < cat_cols; ++j) {
    const std::size_t pos = ds.categorical_feature_positions[j];
    const FeatureSpec& feature = schema.features[pos];
    std::unordered_map<std::string, int> lookup;
    for (std::size_t c = 0; c < feature.categories.size(); ++c) {
      lookup.emplace(feature.categories[c], static_cast<int>(c));
    }
    for (std::size_t i = 0; i < ds.n; ++i) {
      const std::string& cell = table.rows[i][pos];
      auto it = lookup.find(cell);
      if (it == lookup.end()) {
        throw ValidationError("value '" + cell + "' not among schema categories of '" +
                              feature.name + "'");
      }
      ds.categorical_indices[i * cat_cols + j] = it->second;
    }
  }
  return ds;
}

double apply_standardization(const StandardizationStats& stats, double raw) {
  if (stats.stddev == 0.0) return 0.0;
  return (raw - stats.mean) / stats.stddev;
}

std::vector<std::string> load_label_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open label file: " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(line);
  }
  return labels;
}

}  // namespace tagcc
