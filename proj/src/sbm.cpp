#include "t2g/sbm.hpp"

#include <cstdint>
#include <utility>

#include "t2g/errors.hpp"
#include "t2g/stats.hpp"

namespace t2g {

namespace {

std::vector<int> cluster_sizes(const std::vector<int>& assign, int k,
                               const std::string& where) {
  std::vector<int> sizes(k, 0);
  for (int a : assign) {
    if (a < 0 || a >= k)
      throw ValidationError("cluster id " + std::to_string(a) +
                            " out of range for " + where);
    ++sizes[a];
  }
  return sizes;
}

}  // namespace

SbmModel estimate_connectivity(const Reg& reg, const PseudoLabels& pseudo) {
  if (pseudo.assignments.size() != reg.node_counts.size())
    throw ValidationError("pseudo-labels cover " +
                          std::to_string(pseudo.assignments.size()) +
                          " tables, graph has " +
                          std::to_string(reg.node_counts.size()));
  for (size_t t = 0; t < pseudo.assignments.size(); ++t)
    if (static_cast<int>(pseudo.assignments[t].size()) != reg.node_counts[t])
      throw ValidationError("pseudo-label vector for table " +
                            std::to_string(t) + " does not cover every node");

  SbmModel model;
  model.relations = reg.relations;
  const size_t pairs = reg.relations.size() / 2;
  model.p.reserve(pairs);
  for (size_t k = 0; k < pairs; ++k) {
    const RelationType& rel = reg.relations[2 * k];
    const std::vector<int>& src_assign = pseudo.assignments[rel.src_table];
    const std::vector<int>& dst_assign = pseudo.assignments[rel.dst_table];
    const int n_src = pseudo.counts[rel.src_table];
    const int n_dst = pseudo.counts[rel.dst_table];
    const std::vector<int> src_sizes =
        cluster_sizes(src_assign, n_src, "table " + std::to_string(rel.src_table));
    const std::vector<int> dst_sizes =
        cluster_sizes(dst_assign, n_dst, "table " + std::to_string(rel.dst_table));

    Mat counts(n_src, n_dst);
    const CsrAdj& adj = reg.adjacency[2 * k];
    for (int w = 0; w < adj.num_dst; ++w) {
      const int b = dst_assign[w];
      for (std::int64_t e = adj.offsets[w]; e < adj.offsets[w + 1]; ++e)
        counts(src_assign[adj.srcs[e]], b) += 1.0;
    }
    for (int a = 0; a < n_src; ++a)
      for (int b = 0; b < n_dst; ++b) {
        const double denom =
            static_cast<double>(src_sizes[a]) * dst_sizes[b];
        counts(a, b) = denom > 0.0 ? counts(a, b) / denom : 0.0;
      }
    model.p.push_back(std::move(counts));
  }
  model.tau.assign(pairs, 0.0);
  return model;
}

double threshold_relation(const Mat& p, double rho) {
  if (p.rows() == 0 || p.cols() == 0)
    throw ValidationError("cannot threshold an empty connectivity matrix");
  if (!(rho > 0.0) || !(rho < 1.0))
    throw ValidationError("sparsity ratio must lie in (0,1)");
  std::vector<double> entries(p.data(), p.data() + p.size());
  return quantile(std::move(entries), 1.0 - rho);
}

SyntheticStructure generate_structure(const SbmModel& model,
                                      const std::vector<int>& counts) {
  if (model.tau.size() != model.p.size())
    throw ValidationError("connectivity model is missing thresholds");
  SyntheticStructure out;
  out.graph.node_counts = counts;
  out.graph.relations = model.relations;
  out.graph.adjacency.resize(model.relations.size());
  out.density.resize(model.p.size());

  for (size_t k = 0; k < model.p.size(); ++k) {
    const RelationType& rel = model.relations[2 * k];
    if (rel.src_table >= static_cast<int>(counts.size()) ||
        rel.dst_table >= static_cast<int>(counts.size()))
      throw ValidationError("relation " + rel.name +
                            " references a table without a node count");
    const Mat& p = model.p[k];
    if (p.rows() != counts[rel.src_table] || p.cols() != counts[rel.dst_table])
      throw ValidationError("connectivity matrix for " + rel.name +
                            " does not match the node counts");

    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < p.rows(); ++a)
      for (int b = 0; b < p.cols(); ++b)
        if (p(a, b) > model.tau[k]) edges.emplace_back(a, b);
    if (edges.empty() && p.size() > 0) {
      int best_a = 0, best_b = 0;
      for (int a = 0; a < p.rows(); ++a)
        for (int b = 0; b < p.cols(); ++b)
          if (p(a, b) > p(best_a, best_b)) {
            best_a = a;
            best_b = b;
          }
      edges.emplace_back(best_a, best_b);
      out.warnings.push_back("relation " + rel.name +
                             ": threshold excluded every cluster pair, "
                             "keeping the densest one");
    }
    out.density[k] = static_cast<double>(edges.size()) /
                     (static_cast<double>(p.rows()) * p.cols());
    out.graph.adjacency[2 * k] =
        csr_from_edges(p.rows(), p.cols(), edges);
    out.graph.adjacency[2 * k + 1] =
        csr_transpose(out.graph.adjacency[2 * k]);
  }
  return out;
}

SyntheticStructure build_structure(const Reg& reg, const PseudoLabels& pseudo,
                                   double rho) {
  SbmModel model = estimate_connectivity(reg, pseudo);
  model.rho = rho;
  for (size_t k = 0; k < model.p.size(); ++k)
    model.tau[k] = threshold_relation(model.p[k], rho);
  return generate_structure(model, pseudo.counts);
}

}  // namespace t2g
