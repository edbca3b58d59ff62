#include "t2g/reg.hpp"

#include <sstream>

#include "t2g/errors.hpp"

namespace t2g {

std::vector<RelationType> relations_from_schema(const Schema& schema) {
  std::vector<RelationType> relations;
  for (size_t t = 0; t < schema.tables.size(); ++t) {
    const TableSpec& spec = schema.tables[t];
    for (const ColumnSpec& col : spec.columns) {
      if (col.kind != ColumnKind::kForeignKey) continue;
      const int parent = schema.table_index(col.target_table);

      RelationType fwd;
      fwd.id = static_cast<int>(relations.size());
      fwd.src_table = static_cast<int>(t);
      fwd.dst_table = parent;
      fwd.direction = Direction::kForward;
      fwd.name = spec.name + "." + col.name;
      relations.push_back(fwd);

      RelationType inv;
      inv.id = static_cast<int>(relations.size());
      inv.src_table = parent;
      inv.dst_table = static_cast<int>(t);
      inv.direction = Direction::kInverse;
      inv.name = fwd.name + "^-1";
      relations.push_back(inv);
    }
  }
  return relations;
}

Reg build_reg(const RdbInstance& rdb) {
  Reg reg;
  for (const TableData& td : rdb.tables) reg.node_counts.push_back(td.rows());
  reg.relations = relations_from_schema(rdb.schema);

  std::vector<int> fk_seen(rdb.tables.size(), 0);
  for (size_t i = 0; i < reg.relations.size(); i += 2) {
    const RelationType& fwd = reg.relations[i];
    const TableData& td = rdb.tables[fwd.src_table];
    const std::vector<int>& parents = td.fk_rows[fk_seen[fwd.src_table]++];

    std::vector<std::pair<int, int>> edges;
    edges.reserve(parents.size());
    for (size_t r = 0; r < parents.size(); ++r)
      edges.emplace_back(static_cast<int>(r), parents[r]);

    reg.adjacency.push_back(csr_from_edges(reg.node_counts[fwd.src_table],
                                           reg.node_counts[fwd.dst_table],
                                           edges));
    reg.adjacency.push_back(csr_transpose(reg.adjacency.back()));
  }
  return reg;
}

std::vector<int> Reg::neighbors(int relation_id, int node) const {
  if (relation_id < 0 || relation_id >= static_cast<int>(relations.size()))
    throw ValidationError("unknown relation id");
  const CsrAdj& adj = adjacency[relation_id];
  if (node < 0 || node >= adj.num_dst)
    throw ValidationError("node outside the relation's destination table");
  return std::vector<int>(adj.srcs.begin() + adj.offsets[node],
                          adj.srcs.begin() + adj.offsets[node + 1]);
}

std::int64_t Reg::forward_edge_count() const {
  std::int64_t total = 0;
  for (size_t i = 0; i < relations.size(); ++i)
    if (relations[i].direction == Direction::kForward)
      total += adjacency[i].edge_count();
  return total;
}

std::string Reg::dump_edges() const {
  std::ostringstream out;
  for (size_t i = 0; i < relations.size(); ++i) {
    const CsrAdj& adj = adjacency[i];
    for (int v = 0; v < adj.num_dst; ++v)
      for (std::int64_t k = adj.offsets[v]; k < adj.offsets[v + 1]; ++k)
        out << relations[i].id << ',' << adj.srcs[k] << ',' << v << '\n';
  }
  return out.str();
}

}  // namespace t2g
