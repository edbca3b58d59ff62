#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <utility>
#include <vector>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"
#include "t2g/sbm.hpp"

using t2g::CsrAdj;
using t2g::Mat;
using t2g::PseudoLabels;
using t2g::Reg;
using t2g::SbmModel;

namespace {

// One forward FK relation (children -> parents) plus its inverse.
Reg two_table_graph(int children, int parents,
                    const std::vector<std::pair<int, int>>& edges) {
  Reg reg;
  reg.node_counts = {children, parents};
  reg.relations = {
      {0, 0, 1, t2g::Direction::kForward, "c.p"},
      {1, 1, 0, t2g::Direction::kInverse, "c.p^-1"},
  };
  reg.adjacency.resize(2);
  reg.adjacency[0] = t2g::csr_from_edges(children, parents, edges);
  reg.adjacency[1] = t2g::csr_transpose(reg.adjacency[0]);
  return reg;
}

PseudoLabels labels_of(std::vector<std::vector<int>> assignments) {
  PseudoLabels pseudo;
  pseudo.assignments = std::move(assignments);
  for (const std::vector<int>& a : pseudo.assignments) {
    int k = 0;
    for (int id : a) k = std::max(k, id + 1);
    pseudo.counts.push_back(k);
  }
  return pseudo;
}

std::set<std::pair<int, int>> forward_edges(const t2g::SyntheticStructure& s) {
  std::set<std::pair<int, int>> out;
  const CsrAdj& adj = s.graph.adjacency[0];
  for (int b = 0; b < adj.num_dst; ++b)
    for (std::int64_t e = adj.offsets[b]; e < adj.offsets[b + 1]; ++e)
      out.emplace(adj.srcs[e], b);
  return out;
}

}  // namespace

TEST_CASE("connectivity is edge count over pair count") {
  // clusters: a1={u0,u1}, a2={u2}; b1={w0}; one edge (u0,w0)
  Reg reg = two_table_graph(3, 1, {{0, 0}});
  PseudoLabels pseudo = labels_of({{0, 0, 1}, {0}});
  SbmModel model = t2g::estimate_connectivity(reg, pseudo);
  REQUIRE(model.p.size() == 1);
  CHECK(model.p[0].rows() == 2);
  CHECK(model.p[0].cols() == 1);
  CHECK(model.p[0](0, 0) == doctest::Approx(0.5));
  CHECK(model.p[0](1, 0) == doctest::Approx(0.0));
}

TEST_CASE("fully connected cluster pair reaches density one") {
  Reg reg = two_table_graph(4, 1, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  PseudoLabels pseudo = labels_of({{0, 0, 0, 0}, {0}});
  SbmModel model = t2g::estimate_connectivity(reg, pseudo);
  CHECK(model.p[0](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("connectivity matches all-pairs enumeration on a random graph") {
  t2g::Rng rng(31);
  const int children = 40, parents = 12;
  std::vector<std::pair<int, int>> edges;
  std::set<std::pair<int, int>> edge_set;
  for (int v = 0; v < children; ++v) {
    edges.emplace_back(v, rng.uniform_int(parents));
    edge_set.insert(edges.back());
  }
  std::vector<int> ca(children), pa(parents);
  for (int& a : ca) a = rng.uniform_int(5);
  for (int& a : pa) a = rng.uniform_int(3);
  // keep every cluster id populated
  for (int i = 0; i < 5; ++i) ca[i] = i;
  for (int i = 0; i < 3; ++i) pa[i] = i;

  Reg reg = two_table_graph(children, parents, edges);
  SbmModel model = t2g::estimate_connectivity(reg, labels_of({ca, pa}));

  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 3; ++b) {
      std::int64_t hit = 0, all = 0;
      for (int v = 0; v < children; ++v)
        for (int w = 0; w < parents; ++w) {
          if (ca[v] != a || pa[w] != b) continue;
          ++all;
          if (edge_set.count({v, w})) ++hit;
        }
      const double want = all ? static_cast<double>(hit) / all : 0.0;
      CHECK(model.p[0](a, b) == doctest::Approx(want));
    }
}

TEST_CASE("threshold is the (1-rho)-quantile of all entries") {
  Mat p = Mat::from_rows({{0.1, 0.2}, {0.3, 0.4}});
  CHECK(t2g::threshold_relation(p, 0.25) == doctest::Approx(0.3));
  CHECK(t2g::threshold_relation(p, 0.99) == doctest::Approx(0.1));
  Mat flat(2, 3, 0.7);
  CHECK(t2g::threshold_relation(flat, 0.5) == doctest::Approx(0.7));
  CHECK_THROWS_AS(t2g::threshold_relation(Mat(), 0.5), t2g::ValidationError);
  CHECK_THROWS_AS(t2g::threshold_relation(p, 0.0), t2g::ValidationError);
  CHECK_THROWS_AS(t2g::threshold_relation(p, 1.0), t2g::ValidationError);
}

TEST_CASE("thresholding keeps strictly dominant blocks") {
  SbmModel model;
  model.relations = {
      {0, 0, 1, t2g::Direction::kForward, "c.p"},
      {1, 1, 0, t2g::Direction::kInverse, "c.p^-1"},
  };
  model.p = {Mat::from_rows({{0.9, 0.0}, {0.0, 0.9}})};
  model.rho = 0.5;
  model.tau = {t2g::threshold_relation(model.p[0], 0.5)};
  CHECK(model.tau[0] == doctest::Approx(0.0));

  t2g::SyntheticStructure s = t2g::generate_structure(model, {2, 2});
  CHECK(forward_edges(s) == std::set<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(s.density[0] == doctest::Approx(0.5));
  CHECK(s.warnings.empty());
}

TEST_CASE("a relation that loses every pair keeps its densest one") {
  SbmModel model;
  model.relations = {
      {0, 0, 1, t2g::Direction::kForward, "c.p"},
      {1, 1, 0, t2g::Direction::kInverse, "c.p^-1"},
  };
  model.p = {Mat::from_rows({{0.4}})};
  model.tau = {t2g::threshold_relation(model.p[0], 0.5)};  // 0.4, strict >
  t2g::SyntheticStructure s = t2g::generate_structure(model, {1, 1});
  CHECK(forward_edges(s) == std::set<std::pair<int, int>>{{0, 0}});
  REQUIRE(s.warnings.size() == 1);

  // constant matrix: fallback picks the lexicographically first pair
  model.p = {Mat(3, 3, 0.2)};
  model.tau = {t2g::threshold_relation(model.p[0], 0.3)};
  s = t2g::generate_structure(model, {3, 3});
  CHECK(forward_edges(s) == std::set<std::pair<int, int>>{{0, 0}});
}

TEST_CASE("inverse adjacency is the exact transpose") {
  t2g::Rng rng(7);
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < 60; ++v) edges.emplace_back(v, rng.uniform_int(9));
  std::vector<int> ca(60), pa(9);
  for (int i = 0; i < 60; ++i) ca[i] = i % 6;
  for (int i = 0; i < 9; ++i) pa[i] = i % 4;
  Reg reg = two_table_graph(60, 9, edges);
  t2g::SyntheticStructure s =
      t2g::build_structure(reg, labels_of({ca, pa}), 0.4);

  const CsrAdj& fwd = s.graph.adjacency[0];
  const CsrAdj& inv = s.graph.adjacency[1];
  CHECK(inv.num_src == fwd.num_dst);
  CHECK(inv.num_dst == fwd.num_src);
  std::set<std::pair<int, int>> f, r;
  for (int b = 0; b < fwd.num_dst; ++b)
    for (std::int64_t e = fwd.offsets[b]; e < fwd.offsets[b + 1]; ++e)
      f.emplace(fwd.srcs[e], b);
  for (int a = 0; a < inv.num_dst; ++a)
    for (std::int64_t e = inv.offsets[a]; e < inv.offsets[a + 1]; ++e)
      r.emplace(a, inv.srcs[e]);
  CHECK(f == r);
}

TEST_CASE("realized density never exceeds rho by more than one pair") {
  t2g::Rng rng(11);
  for (double rho : {0.05, 0.2, 0.5, 0.8}) {
    std::vector<std::pair<int, int>> edges;
    for (int v = 0; v < 80; ++v) edges.emplace_back(v, rng.uniform_int(15));
    std::vector<int> ca(80), pa(15);
    for (int i = 0; i < 80; ++i) ca[i] = rng.uniform_int(7);
    for (int i = 0; i < 7; ++i) ca[i] = i;
    for (int i = 0; i < 15; ++i) pa[i] = i % 5;
    Reg reg = two_table_graph(80, 15, edges);
    t2g::SyntheticStructure s =
        t2g::build_structure(reg, labels_of({ca, pa}), rho);
    const double pairs = 7.0 * 5.0;
    CHECK(s.density[0] <= rho + 1.0 / pairs + 1e-12);
  }
}

TEST_CASE("edge sets grow monotonically with rho") {
  t2g::Rng rng(13);
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < 100; ++v) edges.emplace_back(v, rng.uniform_int(20));
  std::vector<int> ca(100), pa(20);
  for (int i = 0; i < 100; ++i) ca[i] = rng.uniform_int(8);
  for (int i = 0; i < 8; ++i) ca[i] = i;
  for (int i = 0; i < 20; ++i) pa[i] = i % 6;
  Reg reg = two_table_graph(100, 20, edges);
  PseudoLabels pseudo = labels_of({ca, pa});

  std::set<std::pair<int, int>> prev;
  for (double rho : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    std::set<std::pair<int, int>> cur =
        forward_edges(t2g::build_structure(reg, pseudo, rho));
    for (const auto& e : prev) CHECK(cur.count(e) == 1);
    prev = std::move(cur);
  }
}

TEST_CASE("planted diagonal blocks are recovered exactly") {
  // 3 child clusters of 20, 3 parent clusters of 10; a child links inside
  // its own block with high propensity
  t2g::Rng rng(5);
  const int children = 60, parents = 30;
  std::vector<int> ca(children), pa(parents);
  for (int i = 0; i < children; ++i) ca[i] = i / 20;
  for (int i = 0; i < parents; ++i) pa[i] = i / 10;
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < children; ++v) {
    const int own = ca[v];
    int block = own;
    if (rng.uniform() > 0.85) block = (own + 1 + rng.uniform_int(2)) % 3;
    edges.emplace_back(v, block * 10 + rng.uniform_int(10));
  }
  Reg reg = two_table_graph(children, parents, edges);
  t2g::SyntheticStructure s =
      t2g::build_structure(reg, labels_of({ca, pa}), 3.0 / 9.0);
  CHECK(forward_edges(s) ==
        std::set<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("connectivity estimation validates coverage") {
  Reg reg = two_table_graph(3, 2, {{0, 0}, {1, 1}, {2, 1}});
  PseudoLabels bad = labels_of({{0, 0}, {0, 1}});  // child vector too short
  CHECK_THROWS_AS(t2g::estimate_connectivity(reg, bad),
                  t2g::ValidationError);
  PseudoLabels wrong_tables = labels_of({{0, 0, 0}});
  CHECK_THROWS_AS(t2g::estimate_connectivity(reg, wrong_tables),
                  t2g::ValidationError);
}

TEST_CASE("structure generation validates shapes") {
  SbmModel model;
  model.relations = {
      {0, 0, 1, t2g::Direction::kForward, "c.p"},
      {1, 1, 0, t2g::Direction::kInverse, "c.p^-1"},
  };
  model.p = {Mat(2, 3)};
  CHECK_THROWS_AS(t2g::generate_structure(model, {2, 3}),
                  t2g::ValidationError);  // thresholds missing
  model.tau = {0.5};
  CHECK_THROWS_AS(t2g::generate_structure(model, {2, 4}),
                  t2g::ValidationError);  // count mismatch
}
