#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tagcc/tensor.hpp"

namespace tagcc {

struct FeatureSpec {
  enum class Kind { numeric, categorical };
  std::string name;
  Kind kind = Kind::categorical;
  std::vector<std::string> categories;  // categorical only, order fixed by the schema
  std::string description;

  bool is_numeric() const { return kind == Kind::numeric; }
};

struct Schema {
  std::string dataset_name;
  std::string context;
  int k_star = 0;
  std::vector<FeatureSpec> features;

  std::size_t feature_count() const { return features.size(); }
  std::vector<std::size_t> numeric_positions() const;
  std::vector<std::size_t> categorical_positions() const;
};

Schema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

// 16-char hex digest of the canonical schema serialization.
std::string schema_fingerprint(const Schema& schema);

// Rows kept as raw cell strings; row_ids are 0-based data-row indices in the
// source file (header excluded) and survive filtering.
struct RawTable {
  std::vector<int> row_ids;
  std::vector<std::vector<std::string>> rows;

  std::size_t n() const { return rows.size(); }
};

bool is_missing_cell(const std::string& cell);
bool row_has_missing(const std::vector<std::string>& cells);

RawTable load_table(const std::filesystem::path& path, const Schema& schema);
RawTable drop_missing(const RawTable& table);

// Digest of one row's cell contents, used as an anchor-cache key component.
std::string row_content_hash(const std::vector<std::string>& cells);

struct StandardizationStats {
  double mean = 0.0;
  double stddev = 0.0;  // population std; 0 marks a constant column mapped to zeros
};

struct EncodedDataset {
  std::size_t n = 0;
  std::vector<int> row_ids;
  std::vector<std::size_t> numeric_feature_positions;      // schema positions
  std::vector<std::size_t> categorical_feature_positions;  // schema positions
  Tensor numeric_values;              // n x (#numeric), z-scored
  std::vector<int> categorical_indices;  // n x (#categorical), row-major
  std::vector<StandardizationStats> standardization_stats;  // per numeric column

  std::size_t numeric_count() const { return numeric_feature_positions.size(); }
  std::size_t categorical_count() const { return categorical_feature_positions.size(); }
  int cat_index(std::size_t row, std::size_t col) const {
    return categorical_indices[row * categorical_count() + col];
  }
};

EncodedDataset encode(const RawTable& table, const Schema& schema);

// Reapplies stored standardization stats to a raw value.
double apply_standardization(const StandardizationStats& stats, double raw);

// One label string per source data row, used for evaluation only.
std::vector<std::string> load_label_file(const std::filesystem::path& path);

}  // namespace tagcc
