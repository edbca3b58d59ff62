#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t2g {

enum class ColumnKind : std::uint8_t {
  kPrimaryKey,
  kForeignKey,
  kNumerical,
  kCategorical,
  kTemporal,
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind;
  std::string target_table;  // foreign keys only

  bool operator==(const ColumnSpec&) const = default;
};

struct TableSpec {
  std::string name;
  std::vector<ColumnSpec> columns;
  int primary_key = -1;  // index into columns

  bool operator==(const TableSpec&) const = default;
};

enum class Task : std::uint8_t { kClassification, kRegression };

struct Schema {
  std::vector<TableSpec> tables;
  std::string target_table;
  Task task = Task::kRegression;
  int num_classes = 0;        // classification only
  std::string label_column;   // target-table data column holding labels
  std::string split_column;   // optional; empty means hash split

  int table_index(const std::string& name) const;
  const TableSpec& target() const;

  bool operator==(const Schema&) const = default;
};

Schema parse_schema(const std::string& json_text);
Schema parse_schema_file(const std::string& path);

// Deterministic rendering (sorted keys, fixed field set); the fingerprint
// hashes it so any semantic schema change invalidates downstream artifacts.
std::string canonical_schema_json(const Schema& schema);
std::uint64_t schema_fingerprint(const Schema& schema);

const char* column_kind_name(ColumnKind kind);

}  // namespace t2g
