#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t2g/csv.hpp"
#include "t2g/mat.hpp"
#include "t2g/schema.hpp"
#include "t2g/serialize.hpp"

namespace t2g {

enum class Split : std::uint8_t { kTrain, kVal, kTest };

struct TableData {
  std::vector<std::string> pkeys;
  std::vector<std::string> fk_names;
  std::vector<std::vector<int>> fk_rows;  // per FK column: parent row per row
  Mat numeric;                            // temporal columns folded in
  std::vector<std::string> numeric_names;
  std::vector<std::string> category_names;
  std::vector<std::vector<int>> categories;  // per categorical column: index per row
  std::vector<int> cardinalities;
  std::vector<std::vector<std::string>> category_dicts;  // "" entry = missing
  std::int64_t dropped_rows = 0;

  int rows() const { return static_cast<int>(pkeys.size()); }
  bool operator==(const TableData&) const = default;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // 0 marks a column that was constant

  bool operator==(const NormStats&) const = default;
};

struct RdbInstance {
  Schema schema;
  std::vector<TableData> tables;  // aligned with schema.tables
  std::vector<double> labels;     // regression, row-aligned with target table
  std::vector<int> class_labels;  // classification, likewise
  std::vector<Split> splits;      // target table rows
  std::vector<NormStats> norm_stats;
  bool normalized = false;

  int target_index() const { return schema.table_index(schema.target_table); }
  const TableData& target_data() const { return tables[target_index()]; }
  std::vector<int> rows_in_split(Split s) const;

  bool operator==(const RdbInstance&) const = default;
};

struct LoadReport {
  std::vector<std::string> warnings;
  std::int64_t total_dropped = 0;
};

// Sources keyed by table name. Rows whose foreign keys cannot be resolved
// (missing value, unknown parent, or parent itself dropped) are removed
// iteratively until every remaining edge resolves.
RdbInstance load_rdb(const Schema& schema,
                     const std::map<std::string, CsvTable>& sources,
                     LoadReport* report = nullptr);
// Reads <data_dir>/<table>.csv for every schema table.
RdbInstance load_rdb_dir(const Schema& schema, const std::string& data_dir,
                         LoadReport* report = nullptr);

// Standardizes every numerical column to zero mean, unit population variance
// over training-visible rows (target table: train split; others: all rows).
// Constant columns become all zeros with stddev recorded as 0.
void normalize(RdbInstance& rdb);

double parse_temporal(const std::string& cell);  // epoch seconds, UTC
Split split_of_key(const std::string& pkey);     // deterministic 60/20/20

void write_rdb(const RdbInstance& rdb, ByteWriter& out);
RdbInstance read_rdb(ByteReader& in);
void save_rdb_file(const RdbInstance& rdb, const std::string& path);
RdbInstance load_rdb_file(const std::string& path);

}  // namespace t2g
