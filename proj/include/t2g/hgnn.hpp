#pragma once

#include <cstdint>
#include <vector>

#include "t2g/mat.hpp"
#include "t2g/reg.hpp"
#include "t2g/tape.hpp"

namespace t2g {

// A graph the encoder can run on: the entity graph itself or a synthetic
// structure carrying the same relation list over fewer nodes.
struct GraphView {
  const std::vector<int>& node_counts;
  const std::vector<RelationType>& relations;
  const std::vector<CsrAdj>& adjacency;
};

inline GraphView view_of(const Reg& reg) {
  return {reg.node_counts, reg.relations, reg.adjacency};
}

// SAGE-style heterogeneous encoder. Per layer, per node type: a self
// transform and bias; per relation: one linear map applied to the mean of
// the relation's neighborhood. ReLU between layers, none after the last.
struct HgnnParams {
  int layers = 0;
  int d_in = 0;
  int hidden = 0;
  std::vector<std::vector<Mat>> self_w;  // [layer][table], d_prev x hidden
  std::vector<std::vector<Mat>> self_b;  // [layer][table], 1 x hidden
  std::vector<std::vector<Mat>> rel_w;   // [layer][relation], d_prev x hidden

  bool operator==(const HgnnParams&) const = default;
};

HgnnParams init_hgnn(std::uint64_t seed, int n_tables, int n_relations,
                     int layers, int d_in, int hidden);

struct BoundHgnn {
  std::vector<std::vector<int>> self_w, self_b, rel_w;
};

BoundHgnn bind_hgnn(Tape& tape, const HgnnParams& params, bool trainable);

// features: one node id per table, n_T x d_in. Returns one node per table,
// n_T x hidden.
std::vector<int> hgnn_forward(Tape& tape, const BoundHgnn& bound,
                              const HgnnParams& params, GraphView graph,
                              const std::vector<int>& features);

void hgnn_sgd_step(HgnnParams& params, const Tape& tape, const BoundHgnn& bound,
                   double lr, double weight_decay);

}  // namespace t2g
