#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <string>

#include "t2g/csv.hpp"
#include "t2g/errors.hpp"
#include "t2g/reg.hpp"
#include "t2g/rng.hpp"

using t2g::CsvTable;
using t2g::RdbInstance;
using t2g::Reg;
using t2g::Schema;

namespace {

RdbInstance two_table_rdb() {
  Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "store", "columns": [{"name": "id", "kind": "primary-key"}]},
      {"name": "sales", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "store", "kind": "foreign-key", "target": "store"}
      ]}
    ],
    "target_table": "sales",
    "task": "regression",
    "label_column": "y"
  })");
  std::map<std::string, CsvTable> data;
  data["store"] = t2g::parse_csv("id\np0\np1\np2\n");
  data["sales"] = t2g::parse_csv(
      "id,store,y\nc0,p1,0\nc1,p0,0\nc2,p1,0\nc3,p2,0\nc4,p1,0\n");
  return t2g::load_rdb(schema, data);
}

}  // namespace

TEST_CASE("build_reg makes one forward and one inverse relation per fk") {
  RdbInstance rdb = two_table_rdb();
  Reg reg = t2g::build_reg(rdb);

  CHECK(reg.node_counts == std::vector<int>{3, 5});
  REQUIRE(reg.relations.size() == 2);
  CHECK(reg.relations[0].direction == t2g::Direction::kForward);
  CHECK(reg.relations[0].src_table == 1);
  CHECK(reg.relations[0].dst_table == 0);
  CHECK(reg.relations[1].direction == t2g::Direction::kInverse);
  CHECK(reg.relations[1].src_table == 0);
  CHECK(reg.relations[1].dst_table == 1);
  CHECK(reg.relations[1].name == "sales.store^-1");

  CHECK(reg.forward_edge_count() == 5);
  CHECK(reg.adjacency[0].edge_count() == 5);
  CHECK(reg.adjacency[1].edge_count() == 5);

  // children of parent p1, ascending
  CHECK(reg.neighbors(0, 1) == std::vector<int>{0, 2, 4});
  // a child's single parent through the inverse relation
  CHECK(reg.neighbors(1, 3) == std::vector<int>{2});
  CHECK(reg.neighbors(1, 1) == std::vector<int>{0});

  CHECK_THROWS_AS(reg.neighbors(0, 3), t2g::ValidationError);
  CHECK_THROWS_AS(reg.neighbors(5, 0), t2g::ValidationError);
}

TEST_CASE("inverse adjacency is the exact transpose of the forward list") {
  RdbInstance rdb = two_table_rdb();
  Reg reg = t2g::build_reg(rdb);
  const t2g::CsrAdj redone = t2g::csr_transpose(reg.adjacency[0]);
  CHECK(redone.offsets == reg.adjacency[1].offsets);
  CHECK(redone.srcs == reg.adjacency[1].srcs);
}

TEST_CASE("neighbors agree with a brute-force scan on a random graph") {
  t2g::Rng rng(512);
  const int parents = 17, children = 53;
  Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "p", "columns": [{"name": "id", "kind": "primary-key"}]},
      {"name": "c", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "p", "kind": "foreign-key", "target": "p"}
      ]}
    ],
    "target_table": "c",
    "task": "regression",
    "label_column": "y"
  })");
  std::string pcsv = "id\n";
  for (int i = 0; i < parents; ++i) pcsv += "p" + std::to_string(i) + "\n";
  std::string ccsv = "id,p,y\n";
  std::vector<int> fk(children);
  for (int i = 0; i < children; ++i) {
    fk[i] = rng.uniform_int(parents);
    ccsv += "c" + std::to_string(i) + ",p" + std::to_string(fk[i]) + ",0\n";
  }
  std::map<std::string, CsvTable> data{{"p", t2g::parse_csv(pcsv)},
                                       {"c", t2g::parse_csv(ccsv)}};
  RdbInstance rdb = t2g::load_rdb(schema, data);
  Reg reg = t2g::build_reg(rdb);

  for (int v = 0; v < parents; ++v) {
    std::vector<int> expect;
    for (int i = 0; i < children; ++i)
      if (fk[i] == v) expect.push_back(i);
    CHECK(reg.neighbors(0, v) == expect);
  }
  for (int i = 0; i < children; ++i)
    CHECK(reg.neighbors(1, i) == std::vector<int>{fk[i]});

  // stable across rebuilds
  CHECK(reg.dump_edges() == t2g::build_reg(rdb).dump_edges());
}

TEST_CASE("two foreign keys on one table become two relation pairs") {
  Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "a", "columns": [{"name": "id", "kind": "primary-key"}]},
      {"name": "b", "columns": [{"name": "id", "kind": "primary-key"}]},
      {"name": "c", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "fa", "kind": "foreign-key", "target": "a"},
        {"name": "fb", "kind": "foreign-key", "target": "b"}
      ]}
    ],
    "target_table": "c",
    "task": "regression",
    "label_column": "y"
  })");
  std::map<std::string, CsvTable> data;
  data["a"] = t2g::parse_csv("id\na0\n");
  data["b"] = t2g::parse_csv("id\nb0\n");
  data["c"] = t2g::parse_csv("id,fa,fb,y\nc0,a0,b0,0\nc1,a0,b0,0\n");
  Reg reg = t2g::build_reg(t2g::load_rdb(schema, data));

  REQUIRE(reg.relations.size() == 4);
  CHECK(reg.relations[0].name == "c.fa");
  CHECK(reg.relations[2].name == "c.fb");
  CHECK(reg.forward_edge_count() == 4);
  CHECK(reg.adjacency[0].edge_count() == 2);
  CHECK(reg.adjacency[2].edge_count() == 2);
  CHECK(reg.neighbors(0, 0) == std::vector<int>{0, 1});
  CHECK(reg.neighbors(2, 0) == std::vector<int>{0, 1});
}

TEST_CASE("self-referencing foreign keys stay within one table") {
  Schema schema = t2g::parse_schema(R"({
    "tables": [
      {"name": "emp", "columns": [
        {"name": "id", "kind": "primary-key"},
        {"name": "boss", "kind": "foreign-key", "target": "emp"}
      ]}
    ],
    "target_table": "emp",
    "task": "regression",
    "label_column": "y"
  })");
  std::map<std::string, CsvTable> data;
  data["emp"] = t2g::parse_csv("id,boss,y\ne0,e0,0\ne1,e0,0\ne2,e1,0\n");
  Reg reg = t2g::build_reg(t2g::load_rdb(schema, data));
  CHECK(reg.relations.size() == 2);
  CHECK(reg.relations[0].src_table == 0);
  CHECK(reg.relations[0].dst_table == 0);
  CHECK(reg.neighbors(0, 0) == std::vector<int>{0, 1});  // direct reports
  CHECK(reg.neighbors(1, 2) == std::vector<int>{1});     // e2's boss
}
