#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tagcc/common.hpp"
#include "tagcc/dataset.hpp"

using namespace tagcc;

namespace {

const std::filesystem::path kRoot = TAGCC_SOURCE_DIR;

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  write_text_file(path, content);
  return path;
}

Schema two_feature_schema() {
  return schema_from_json(nlohmann::json::parse(R"({
    "dataset_name": "tiny",
    "context": "",
    "k_star": 2,
    "features": [
      {"name": "size", "kind": "numeric", "description": "a size"},
      {"name": "color", "kind": "categorical", "categories": ["red", "blue"],
       "description": "a color"}
    ]})"));
}

}  // namespace

TEST_CASE("zoo schema loads with 15 features and k_star 7") {
  const Schema schema = load_schema(kRoot / "data/zoo/zoo.schema.json");
  CHECK(schema.feature_count() == 15);
  CHECK(schema.k_star == 7);
  CHECK(schema.dataset_name == "zoo");
  CHECK(schema.numeric_positions().size() == 1);  // legs
}

TEST_CASE("duplicate feature names are rejected") {
  const auto doc = nlohmann::json::parse(R"({
    "dataset_name": "dup", "context": "", "k_star": 2,
    "features": [
      {"name": "age", "kind": "numeric", "description": ""},
      {"name": "age", "kind": "numeric", "description": ""}
    ]})");
  CHECK_THROWS_AS(schema_from_json(doc), ValidationError);
}

TEST_CASE("minimal schema with one categorical feature is valid") {
  const auto doc = nlohmann::json::parse(R"({
    "dataset_name": "min", "context": "", "k_star": 2,
    "features": [
      {"name": "only", "kind": "categorical", "categories": ["a"], "description": ""}
    ]})");
  const Schema schema = schema_from_json(doc);
  CHECK(schema.feature_count() == 1);
}

TEST_CASE("k_star below 2 is rejected") {
  const auto doc = nlohmann::json::parse(R"({
    "dataset_name": "bad", "context": "", "k_star": 1,
    "features": [{"name": "f", "kind": "numeric", "description": ""}]})");
  CHECK_THROWS_AS(schema_from_json(doc), ValidationError);
}

TEST_CASE("lenses file loads 24 rows") {
  const Schema schema = load_schema(kRoot / "data/lenses/lenses.schema.json");
  const RawTable table = load_table(kRoot / "data/lenses/lenses.csv", schema);
  CHECK(table.n() == 24);
}

TEST_CASE("arity violations are rejected") {
  const Schema schema = two_feature_schema();
  const auto path = temp_file("tagcc_arity.csv", "1.0,red\n2.0\n");
  CHECK_THROWS_AS(load_table(path, schema), ValidationError);
}

TEST_CASE("header row matching feature names is skipped") {
  const Schema schema = two_feature_schema();
  const auto path = temp_file("tagcc_header.csv", "size,color\n1.0,red\n2.0,blue\n");
  const RawTable table = load_table(path, schema);
  CHECK(table.n() == 2);
  CHECK(table.rows[0][0] == "1.0");
}

TEST_CASE("drop_missing keeps order and counts") {
  const Schema schema = two_feature_schema();
  const auto path = temp_file("tagcc_missing.csv",
                              "1,red\n2,?\n3,blue\n4,red\n5,blue\n");
  const RawTable table = load_table(path, schema);
  CHECK(table.n() == 5);
  const RawTable kept = drop_missing(table);
  CHECK(kept.n() == 4);
  CHECK(kept.row_ids == std::vector<int>{0, 2, 3, 4});

  const RawTable again = drop_missing(kept);  // no missing -> identical
  CHECK(again.rows == kept.rows);

  const auto all_missing = temp_file("tagcc_allmiss.csv", "?,red\n1,?\n");
  const RawTable empty = drop_missing(load_table(all_missing, schema));
  CHECK(empty.n() == 0);
}

TEST_CASE("encode standardizes numeric columns with population std") {
  const Schema schema = two_feature_schema();
  const auto path = temp_file("tagcc_encode.csv", "1,red\n2,blue\n3,red\n");
  const EncodedDataset ds = encode(load_table(path, schema), schema);
  CHECK(ds.n == 3);
  CHECK(ds.numeric_values.at(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(ds.numeric_values.at(1, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ds.numeric_values.at(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(ds.categorical_indices == std::vector<int>{0, 1, 0});

  // stats reproduce the transform exactly
  const StandardizationStats& stats = ds.standardization_stats[0];
  for (std::size_t i = 0; i < 3; ++i) {
    const double raw = 1.0 + static_cast<double>(i);
    CHECK(apply_standardization(stats, raw) == ds.numeric_values.at(i, 0));
  }
}

TEST_CASE("constant numeric columns map to zeros") {
  const Schema schema = two_feature_schema();
  const auto path = temp_file("tagcc_const.csv", "5,red\n5,blue\n5,red\n");
  const EncodedDataset ds = encode(load_table(path, schema), schema);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ds.numeric_values.at(i, 0) == 0.0);
  CHECK(ds.standardization_stats[0].stddev == 0.0);
}

TEST_CASE("encode rejects unknown categories and non-numeric cells") {
  const Schema schema = two_feature_schema();
  const auto bad_cat = temp_file("tagcc_badcat.csv", "1,green\n");
  CHECK_THROWS_AS(encode(load_table(bad_cat, schema), schema), ValidationError);
  const auto bad_num = temp_file("tagcc_badnum.csv", "abc,red\n");
  CHECK_THROWS_AS(encode(load_table(bad_num, schema), schema), ValidationError);
}

TEST_CASE("standardized columns have mean 0 and population std 1") {
  const Schema schema = load_schema(kRoot / "data/fertility/fertility.schema.json");
  const RawTable table =
      drop_missing(load_table(kRoot / "data/fertility/fertility.csv", schema));
  const EncodedDataset ds = encode(table, schema);
  for (std::size_t j = 0; j < ds.numeric_count(); ++j) {
    if (ds.standardization_stats[j].stddev == 0.0) continue;
    double mean = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) mean += ds.numeric_values.at(i, j);
    mean /= static_cast<double>(ds.n);
    double var = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
      const double c = ds.numeric_values.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(ds.n);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("categorical round trip reproduces original cells") {
  const Schema schema = load_schema(kRoot / "data/zoo/zoo.schema.json");
  const RawTable table = drop_missing(load_table(kRoot / "data/zoo/zoo.csv", schema));
  const EncodedDataset ds = encode(table, schema);
  CHECK(ds.n == 101);
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.categorical_count(); ++j) {
      const std::size_t pos = ds.categorical_feature_positions[j];
      const FeatureSpec& f = schema.features[pos];
      const int idx = ds.cat_index(i, j);
      CHECK(f.categories[static_cast<std::size_t>(idx)] == table.rows[i][pos]);
    }
  }
}

TEST_CASE("schema fingerprint is stable and schema-sensitive") {
  const Schema a = two_feature_schema();
  const Schema b = two_feature_schema();
  CHECK(schema_fingerprint(a) == schema_fingerprint(b));
  Schema c = two_feature_schema();
  c.k_star = 3;
  CHECK(schema_fingerprint(a) != schema_fingerprint(c));
}
