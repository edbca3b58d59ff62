#pragma once

#include <string>
#include <vector>

#include "t2g/rdb.hpp"
#include "t2g/tape.hpp"

namespace t2g {

enum class Direction : std::uint8_t { kForward, kInverse };

struct RelationType {
  int id = 0;
  int src_table = 0;
  int dst_table = 0;
  Direction direction = Direction::kForward;
  std::string name;  // "<table>.<fk_column>" plus "^-1" for the inverse

  bool operator==(const RelationType&) const = default;
};

// Entity graph over table rows: one node per row, one forward relation per
// foreign-key column plus its materialized inverse. Relations come in
// (forward, inverse) pairs at ids (2k, 2k+1).
struct Reg {
  std::vector<int> node_counts;  // per table
  std::vector<RelationType> relations;
  std::vector<CsrAdj> adjacency;  // per relation, indexed by dst node

  std::vector<int> neighbors(int relation_id, int node) const;
  std::int64_t forward_edge_count() const;
  std::string dump_edges() const;  // "relation_id,src,dst" lines
};

// The (forward, inverse) pair list in schema order, without adjacency.
std::vector<RelationType> relations_from_schema(const Schema& schema);

Reg build_reg(const RdbInstance& rdb);

}  // namespace t2g
