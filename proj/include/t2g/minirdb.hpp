#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2g/csv.hpp"
#include "t2g/rdb.hpp"
#include "t2g/schema.hpp"

namespace t2g {

// Two-table synthetic database with planted cluster structure. Every child
// links to one parent, preferring parents in its own cluster by intra:inter
// odds. Labels are a weighted sum of the linked parent's numeric columns
// plus noise (regression), or its sign (classification), so a model only
// scores well by pulling information across the foreign key.
struct MiniRdbConfig {
  int rows = 2000;     // child rows
  int parents = 0;     // 0 means rows / 10
  int clusters = 3;    // planted blocks per table
  double intra = 0.3;  // same-cluster link propensity
  double inter = 0.01;
  Task task = Task::kClassification;
  double noise = 1.0;  // label noise scale
  std::uint64_t seed = 0;
};

struct MiniRdb {
  Schema schema;
  CsvTable parent;
  CsvTable child;
  std::vector<int> parent_cluster;  // planted assignment per row
  std::vector<int> child_cluster;
};

MiniRdb generate_minirdb(const MiniRdbConfig& cfg);

// schema.json, parent.csv, child.csv, truth.json under dir.
void write_minirdb(const MiniRdb& db, const std::string& dir);

// Loads without a round-trip through files.
RdbInstance load_minirdb(const MiniRdb& db);

}  // namespace t2g
