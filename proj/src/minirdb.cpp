#include "t2g/minirdb.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "t2g/errors.hpp"
#include "t2g/rng.hpp"

#include <nlohmann/json.hpp>

namespace t2g {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

Schema minirdb_schema(Task task) {
  nlohmann::json j = {
      {"tables",
       {{{"name", "parent"},
         {"columns",
          {{{"name", "id"}, {"kind", "primary-key"}},
           {{"name", "u"}, {"kind", "numerical"}},
           {{"name", "w"}, {"kind", "numerical"}}}}},
        {{"name", "child"},
         {"columns",
          {{{"name", "id"}, {"kind", "primary-key"}},
           {{"name", "parent"}, {"kind", "foreign-key"}, {"target", "parent"}},
           {{"name", "x"}, {"kind", "numerical"}},
           {{"name", "x2"}, {"kind", "numerical"}},
           {{"name", "g"}, {"kind", "categorical"}}}}}}},
      {"target_table", "child"},
      {"label_column", "y"},
      {"split_column", "split"}};
  if (task == Task::kClassification) {
    j["task"] = "classification";
    j["num_classes"] = 2;
  } else {
    j["task"] = "regression";
  }
  return parse_schema(j.dump());
}

}  // namespace

MiniRdb generate_minirdb(const MiniRdbConfig& cfg) {
  const int parents = cfg.parents > 0 ? cfg.parents : cfg.rows / 10;
  if (cfg.clusters < 1) throw ValidationError("need at least one cluster");
  if (cfg.rows < cfg.clusters || parents < cfg.clusters)
    throw ValidationError("each table needs at least one row per cluster");
  if (!(cfg.intra > 0.0) || !(cfg.inter > 0.0) || cfg.inter > cfg.intra)
    throw ValidationError("link propensities must satisfy intra >= inter > 0");
  if (cfg.noise < 0.0) throw ValidationError("noise scale must be non-negative");

  const int k = cfg.clusters;
  Rng rng(cfg.seed);
  MiniRdb db;
  db.schema = minirdb_schema(cfg.task);

  // cluster centers spread symmetrically around zero
  auto center = [&](int b) { return 2.0 * (b - 0.5 * (k - 1)); };

  db.parent.header = {"id", "u", "w"};
  std::vector<std::vector<int>> members(k);
  std::vector<double> u(parents), w(parents);
  for (int p = 0; p < parents; ++p) {
    const int b = p % k;
    db.parent_cluster.push_back(b);
    members[b].push_back(p);
    u[p] = center(b) + 0.4 * rng.normal();
    w[p] = rng.normal();
    db.parent.rows.push_back({"p" + std::to_string(p), fmt(u[p]), fmt(w[p])});
  }

  std::vector<double> pick(k);
  db.child.header = {"id", "parent", "x", "x2", "g", "y", "split"};
  for (int c = 0; c < cfg.rows; ++c) {
    const int b = c % k;
    db.child_cluster.push_back(b);

    double total = 0.0;
    for (int a = 0; a < k; ++a) {
      pick[a] = (a == b ? cfg.intra : cfg.inter) * members[a].size();
      total += pick[a];
    }
    double roll = rng.uniform() * total;
    int block = k - 1;
    for (int a = 0; a < k; ++a) {
      roll -= pick[a];
      if (roll < 0.0) {
        block = a;
        break;
      }
    }
    const int p = members[block][rng.uniform_int(
        static_cast<int>(members[block].size()))];

    const double x = center(b) + 0.4 * rng.normal();
    const double x2 = rng.normal();
    const int shown = rng.uniform() < 0.1 ? rng.uniform_int(k) : b;
    const double score = 0.5 * u[p] + w[p];
    const double y = score + cfg.noise * rng.normal();
    const std::string label = cfg.task == Task::kClassification
                                  ? std::string(y > 0.0 ? "1" : "0")
                                  : fmt(y);
    const double s = rng.uniform();
    const std::string split = s < 0.6 ? "train" : s < 0.8 ? "val" : "test";
    db.child.rows.push_back({"c" + std::to_string(c), "p" + std::to_string(p),
                             fmt(x), fmt(x2), "g" + std::to_string(shown),
                             label, split});
  }
  return db;
}

void write_minirdb(const MiniRdb& db, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out(base / "schema.json", std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write schema.json");
    out << canonical_schema_json(db.schema) << "\n";
  }
  write_csv_file((base / "parent.csv").string(), db.parent);
  write_csv_file((base / "child.csv").string(), db.child);
  {
    nlohmann::json truth = {{"parent", db.parent_cluster},
                            {"child", db.child_cluster}};
    std::ofstream out(base / "truth.json", std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write truth.json");
    out << truth.dump(2) << "\n";
  }
}

RdbInstance load_minirdb(const MiniRdb& db) {
  return load_rdb(db.schema, {{"parent", db.parent}, {"child", db.child}});
}

}  // namespace t2g
