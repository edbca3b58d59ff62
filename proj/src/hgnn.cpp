#include "t2g/hgnn.hpp"

#include <cmath>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"

namespace t2g {

namespace {

Mat uniform_mat(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows * cols; ++i)
    m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

HgnnParams init_hgnn(std::uint64_t seed, int n_tables, int n_relations,
                     int layers, int d_in, int hidden) {
  if (layers < 1) throw ValidationError("hgnn needs at least one layer");
  if (d_in < 1 || hidden < 1) throw ValidationError("hgnn widths must be positive");
  HgnnParams p;
  p.layers = layers;
  p.d_in = d_in;
  p.hidden = hidden;
  Rng rng(seed);
  for (int l = 0; l < layers; ++l) {
    const int d_prev = l == 0 ? d_in : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_prev));
    p.self_w.emplace_back();
    p.self_b.emplace_back();
    p.rel_w.emplace_back();
    for (int t = 0; t < n_tables; ++t) {
      p.self_w[l].push_back(uniform_mat(d_prev, hidden, bound, rng));
      p.self_b[l].push_back(uniform_mat(1, hidden, bound, rng));
    }
    for (int r = 0; r < n_relations; ++r)
      p.rel_w[l].push_back(uniform_mat(d_prev, hidden, bound, rng));
  }
  return p;
}

BoundHgnn bind_hgnn(Tape& tape, const HgnnParams& params, bool trainable) {
  BoundHgnn bound;
  for (int l = 0; l < params.layers; ++l) {
    bound.self_w.emplace_back();
    bound.self_b.emplace_back();
    bound.rel_w.emplace_back();
    for (const Mat& m : params.self_w[l])
      bound.self_w[l].push_back(tape.leaf(m, trainable));
    for (const Mat& m : params.self_b[l])
      bound.self_b[l].push_back(tape.leaf(m, trainable));
    for (const Mat& m : params.rel_w[l])
      bound.rel_w[l].push_back(tape.leaf(m, trainable));
  }
  return bound;
}

std::vector<int> hgnn_forward(Tape& tape, const BoundHgnn& bound,
                              const HgnnParams& params, GraphView graph,
                              const std::vector<int>& features) {
  const size_t n_tables = graph.node_counts.size();
  if (features.size() != n_tables)
    throw ValidationError("hgnn_forward: one feature matrix per table required");
  if (params.self_w.empty() || params.self_w[0].size() != n_tables)
    throw ValidationError("hgnn_forward: params built for a different table set");
  if (params.rel_w[0].size() != graph.relations.size())
    throw ValidationError("hgnn_forward: params built for a different relation set");
  for (size_t t = 0; t < n_tables; ++t) {
    const Mat& f = tape.value(features[t]);
    if (f.rows() != graph.node_counts[t] || f.cols() != params.d_in)
      throw ValidationError("hgnn_forward: feature shape mismatch");
  }

  std::vector<int> h = features;
  for (int l = 0; l < params.layers; ++l) {
    std::vector<int> next(n_tables);
    for (size_t t = 0; t < n_tables; ++t)
      next[t] = tape.add_row_broadcast(tape.matmul(h[t], bound.self_w[l][t]),
                                       bound.self_b[l][t]);
    for (size_t r = 0; r < graph.relations.size(); ++r) {
      const RelationType& rel = graph.relations[r];
      const int msg = tape.matmul(
          tape.scatter_mean(h[rel.src_table], graph.adjacency[r]),
          bound.rel_w[l][r]);
      next[rel.dst_table] = tape.add(next[rel.dst_table], msg);
    }
    if (l + 1 < params.layers)
      for (size_t t = 0; t < n_tables; ++t) next[t] = tape.relu(next[t]);
    h = std::move(next);
  }
  return h;
}

void hgnn_sgd_step(HgnnParams& params, const Tape& tape, const BoundHgnn& bound,
                   double lr, double weight_decay) {
  auto step = [&](Mat& param, int node) {
    if (tape.grad(node).rows() > 0)
      sgd_step(param, tape.grad(node), lr, weight_decay);
  };
  for (int l = 0; l < params.layers; ++l) {
    for (size_t t = 0; t < params.self_w[l].size(); ++t) {
      step(params.self_w[l][t], bound.self_w[l][t]);
      step(params.self_b[l][t], bound.self_b[l][t]);
    }
    for (size_t r = 0; r < params.rel_w[l].size(); ++r)
      step(params.rel_w[l][r], bound.rel_w[l][r]);
  }
}

}  // namespace t2g
