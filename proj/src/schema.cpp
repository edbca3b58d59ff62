#include "t2g/schema.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "t2g/errors.hpp"
#include "t2g/serialize.hpp"

namespace t2g {

namespace {

using nlohmann::json;

ColumnKind parse_kind(const std::string& s) {
  if (s == "primary-key") return ColumnKind::kPrimaryKey;
  if (s == "foreign-key") return ColumnKind::kForeignKey;
  if (s == "numerical") return ColumnKind::kNumerical;
  if (s == "categorical") return ColumnKind::kCategorical;
  if (s == "temporal") return ColumnKind::kTemporal;
  throw ValidationError("schema: unknown column kind '" + s + "'");
}

std::string require_string(const json& obj, const char* key,
                           const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string() ||
      obj[key].get<std::string>().empty())
    throw ValidationError("schema: " + where + " needs a non-empty string '" +
                          key + "'");
  return obj[key].get<std::string>();
}

}  // namespace

const char* column_kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kPrimaryKey: return "primary-key";
    case ColumnKind::kForeignKey: return "foreign-key";
    case ColumnKind::kNumerical: return "numerical";
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kTemporal: return "temporal";
  }
  return "?";
}

int Schema::table_index(const std::string& name) const {
  for (size_t i = 0; i < tables.size(); ++i)
    if (tables[i].name == name) return static_cast<int>(i);
  return -1;
}

const TableSpec& Schema::target() const {
  return tables[table_index(target_table)];
}

Schema parse_schema(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("schema: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("schema: top level must be an object");
  if (!doc.contains("tables") || !doc["tables"].is_array() ||
      doc["tables"].empty())
    throw ValidationError("schema: 'tables' must be a non-empty array");

  Schema schema;
  std::set<std::string> seen_tables;
  for (const json& jt : doc["tables"]) {
    TableSpec table;
    table.name = require_string(jt, "name", "table");
    if (!seen_tables.insert(table.name).second)
      throw ValidationError("schema: duplicate table '" + table.name + "'");
    if (!jt.contains("columns") || !jt["columns"].is_array() ||
        jt["columns"].empty())
      throw ValidationError("schema: table '" + table.name +
                            "' needs a non-empty 'columns' array");
    std::set<std::string> seen_columns;
    for (const json& jc : jt["columns"]) {
      ColumnSpec col;
      col.name = require_string(jc, "name", "column");
      if (!seen_columns.insert(col.name).second)
        throw ValidationError("schema: duplicate column '" + col.name +
                              "' in table '" + table.name + "'");
      col.kind = parse_kind(require_string(jc, "kind", "column"));
      if (col.kind == ColumnKind::kForeignKey) {
        col.target_table = require_string(jc, "target", "foreign-key column");
      } else if (jc.contains("target")) {
        throw ValidationError("schema: 'target' only applies to foreign keys");
      }
      if (col.kind == ColumnKind::kPrimaryKey) {
        if (table.primary_key >= 0)
          throw ValidationError("schema: table '" + table.name +
                                "' has multiple primary keys");
        table.primary_key = static_cast<int>(table.columns.size());
      }
      table.columns.push_back(std::move(col));
    }
    if (table.primary_key < 0)
      throw ValidationError("schema: table '" + table.name +
                            "' has no primary key");
    schema.tables.push_back(std::move(table));
  }

  bool any_fk = false;
  for (const TableSpec& table : schema.tables)
    for (const ColumnSpec& col : table.columns)
      if (col.kind == ColumnKind::kForeignKey) {
        any_fk = true;
        if (schema.table_index(col.target_table) < 0)
          throw ValidationError("schema: foreign key '" + col.name +
                                "' targets unknown table '" +
                                col.target_table + "'");
      }
  if (schema.tables.size() > 1 && !any_fk)
    throw ValidationError("schema: multi-table schema has no foreign keys");

  schema.target_table = require_string(doc, "target_table", "document");
  if (schema.table_index(schema.target_table) < 0)
    throw ValidationError("schema: target_table '" + schema.target_table +
                          "' not defined");

  const std::string task = require_string(doc, "task", "document");
  if (task == "classification") {
    schema.task = Task::kClassification;
    if (!doc.contains("num_classes") || !doc["num_classes"].is_number_integer() ||
        doc["num_classes"].get<int>() < 2)
      throw ValidationError("schema: classification needs num_classes >= 2");
    schema.num_classes = doc["num_classes"].get<int>();
  } else if (task == "regression") {
    schema.task = Task::kRegression;
    if (doc.contains("num_classes"))
      throw ValidationError("schema: num_classes only applies to classification");
  } else {
    throw ValidationError("schema: unknown task '" + task + "'");
  }

  schema.label_column = require_string(doc, "label_column", "document");
  for (const ColumnSpec& col : schema.target().columns)
    if (col.name == schema.label_column)
      throw ValidationError(
          "schema: label_column must not double as a feature column");

  if (doc.contains("split_column"))
    schema.split_column = require_string(doc, "split_column", "document");

  return schema;
}

Schema parse_schema_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open schema file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

std::string canonical_schema_json(const Schema& schema) {
  json doc;
  json tables = json::array();
  for (const TableSpec& table : schema.tables) {
    json cols = json::array();
    for (const ColumnSpec& col : table.columns) {
      json jc;
      jc["name"] = col.name;
      jc["kind"] = column_kind_name(col.kind);
      if (col.kind == ColumnKind::kForeignKey) jc["target"] = col.target_table;
      cols.push_back(std::move(jc));
    }
    tables.push_back(json{{"name", table.name}, {"columns", std::move(cols)}});
  }
  doc["tables"] = std::move(tables);
  doc["target_table"] = schema.target_table;
  doc["task"] =
      schema.task == Task::kClassification ? "classification" : "regression";
  if (schema.task == Task::kClassification)
    doc["num_classes"] = schema.num_classes;
  doc["label_column"] = schema.label_column;
  if (!schema.split_column.empty()) doc["split_column"] = schema.split_column;
  return doc.dump();
}

std::uint64_t schema_fingerprint(const Schema& schema) {
  return fnv1a64(canonical_schema_json(schema));
}

}  // namespace t2g
