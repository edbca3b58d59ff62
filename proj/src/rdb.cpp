#include "t2g/rdb.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "t2g/errors.hpp"

namespace t2g {

namespace {

double parse_numeric_cell(const std::string& cell, const std::string& where) {
  const char* s = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0' || !std::isfinite(v))
    throw ValidationError("unparseable numeric cell '" + cell + "' in " + where);
  return v;
}

long parse_int_cell(const std::string& cell, const std::string& where) {
  const char* s = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || errno == ERANGE)
    throw ValidationError("unparseable integer cell '" + cell + "' in " + where);
  return v;
}

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool read_fixed_digits(const std::string& s, size_t pos, int n, int* out) {
  int v = 0;
  for (int i = 0; i < n; ++i) {
    const size_t p = pos + i;
    if (p >= s.size() || s[p] < '0' || s[p] > '9') return false;
    v = v * 10 + (s[p] - '0');
  }
  *out = v;
  return true;
}

struct ColumnMap {
  std::vector<int> csv_col;  // per schema column
  int label_col = -1;
  int split_col = -1;
};

std::vector<int> all_rows(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

double parse_temporal(const std::string& cell) {
  auto fail = [&cell]() -> void {
    throw ValidationError("unparseable temporal cell '" + cell + "'");
  };
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!read_fixed_digits(cell, 0, 4, &y) || cell.size() < 10 ||
      cell[4] != '-' || cell[7] != '-' ||
      !read_fixed_digits(cell, 5, 2, &mo) ||
      !read_fixed_digits(cell, 8, 2, &d))
    fail();
  size_t pos = 10;
  if (pos < cell.size()) {
    if (cell[pos] != ' ' && cell[pos] != 'T') fail();
    if (cell.size() < pos + 9 || cell[pos + 3] != ':' || cell[pos + 6] != ':' ||
        !read_fixed_digits(cell, pos + 1, 2, &h) ||
        !read_fixed_digits(cell, pos + 4, 2, &mi) ||
        !read_fixed_digits(cell, pos + 7, 2, &sec))
      fail();
    pos += 9;
    if (pos < cell.size() && cell[pos] == 'Z') ++pos;
  }
  if (pos != cell.size()) fail();

  static const int dim[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  if (mo < 1 || mo > 12) fail();
  const int max_day = dim[mo - 1] + (mo == 2 && leap ? 1 : 0);
  if (d < 1 || d > max_day || h > 23 || mi > 59 || sec > 59) fail();

  const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo),
                                            static_cast<unsigned>(d));
  return static_cast<double>(days * 86400 + h * 3600 + mi * 60 + sec);
}

Split split_of_key(const std::string& pkey) {
  const std::uint64_t bucket = fnv1a64(pkey) % 100;
  if (bucket < 60) return Split::kTrain;
  if (bucket < 80) return Split::kVal;
  return Split::kTest;
}

std::vector<int> RdbInstance::rows_in_split(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

RdbInstance load_rdb(const Schema& schema,
                     const std::map<std::string, CsvTable>& sources,
                     LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  const int n_tables = static_cast<int>(schema.tables.size());
  const int tgt = schema.table_index(schema.target_table);

  std::vector<const CsvTable*> csvs(n_tables);
  std::vector<ColumnMap> maps(n_tables);
  for (int t = 0; t < n_tables; ++t) {
    const TableSpec& spec = schema.tables[t];
    auto it = sources.find(spec.name);
    if (it == sources.end())
      throw ValidationError("no data source for table '" + spec.name + "'");
    csvs[t] = &it->second;
    for (const ColumnSpec& col : spec.columns) {
      const int idx = csvs[t]->column(col.name);
      if (idx < 0)
        throw ValidationError("table '" + spec.name + "' data lacks column '" +
                              col.name + "'");
      maps[t].csv_col.push_back(idx);
    }
    if (t == tgt) {
      maps[t].label_col = csvs[t]->column(schema.label_column);
      if (maps[t].label_col < 0)
        throw ValidationError("label column '" + schema.label_column +
                              "' absent on target table");
      if (!schema.split_column.empty()) {
        maps[t].split_col = csvs[t]->column(schema.split_column);
        if (maps[t].split_col < 0)
          throw ValidationError("split column '" + schema.split_column +
                                "' absent on target table");
      }
    }
    if (csvs[t]->rows.empty())
      rep.warnings.push_back("table '" + spec.name + "' has no data rows");
  }

  std::vector<std::unordered_map<std::string, int>> pkey_row(n_tables);
  for (int t = 0; t < n_tables; ++t) {
    const int pk_col = maps[t].csv_col[schema.tables[t].primary_key];
    pkey_row[t].reserve(csvs[t]->rows.size());
    for (size_t r = 0; r < csvs[t]->rows.size(); ++r) {
      const std::string& key = csvs[t]->rows[r][pk_col];
      if (key.empty())
        throw ValidationError("empty primary key in table '" +
                              schema.tables[t].name + "'");
      if (!pkey_row[t].emplace(key, static_cast<int>(r)).second)
        throw ValidationError("duplicate primary key '" + key + "' in table '" +
                              schema.tables[t].name + "'");
    }
  }

  // Drop rows with unresolvable foreign keys until stable; dropping a parent
  // can orphan children in a previously clean table.
  std::vector<std::vector<char>> keep(n_tables);
  for (int t = 0; t < n_tables; ++t) keep[t].assign(csvs[t]->rows.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (int t = 0; t < n_tables; ++t) {
      const TableSpec& spec = schema.tables[t];
      for (size_t c = 0; c < spec.columns.size(); ++c) {
        if (spec.columns[c].kind != ColumnKind::kForeignKey) continue;
        const int parent = schema.table_index(spec.columns[c].target_table);
        const int csv_col = maps[t].csv_col[c];
        for (size_t r = 0; r < csvs[t]->rows.size(); ++r) {
          if (!keep[t][r]) continue;
          const std::string& v = csvs[t]->rows[r][csv_col];
          auto it = pkey_row[parent].find(v);
          if (v.empty() || it == pkey_row[parent].end() ||
              !keep[parent][it->second]) {
            keep[t][r] = 0;
            changed = true;
          }
        }
      }
    }
  }

  std::vector<std::vector<int>> new_id(n_tables);
  for (int t = 0; t < n_tables; ++t) {
    new_id[t].assign(csvs[t]->rows.size(), -1);
    int next = 0;
    for (size_t r = 0; r < csvs[t]->rows.size(); ++r)
      if (keep[t][r]) new_id[t][r] = next++;
  }

  RdbInstance rdb;
  rdb.schema = schema;
  rdb.tables.resize(n_tables);
  for (int t = 0; t < n_tables; ++t) {
    const TableSpec& spec = schema.tables[t];
    const CsvTable& csv = *csvs[t];
    TableData& td = rdb.tables[t];
    const int pk_col = maps[t].csv_col[spec.primary_key];
    for (size_t r = 0; r < csv.rows.size(); ++r)
      if (keep[t][r]) td.pkeys.push_back(csv.rows[r][pk_col]);
    td.dropped_rows =
        static_cast<std::int64_t>(csv.rows.size()) - td.rows();
    if (td.dropped_rows > 0) {
      rep.warnings.push_back("dropped " + std::to_string(td.dropped_rows) +
                             " rows with unresolvable foreign keys from table '" +
                             spec.name + "'");
      rep.total_dropped += td.dropped_rows;
    }

    std::vector<std::vector<double>> numeric_cols;
    for (size_t c = 0; c < spec.columns.size(); ++c) {
      const ColumnSpec& col = spec.columns[c];
      const int csv_col = maps[t].csv_col[c];
      const std::string where = spec.name + "." + col.name;
      switch (col.kind) {
        case ColumnKind::kPrimaryKey:
          break;
        case ColumnKind::kForeignKey: {
          const int parent = schema.table_index(col.target_table);
          std::vector<int> ids;
          ids.reserve(td.pkeys.size());
          for (size_t r = 0; r < csv.rows.size(); ++r) {
            if (!keep[t][r]) continue;
            ids.push_back(new_id[parent][pkey_row[parent].at(csv.rows[r][csv_col])]);
          }
          td.fk_names.push_back(col.name);
          td.fk_rows.push_back(std::move(ids));
          break;
        }
        case ColumnKind::kCategorical: {
          std::unordered_map<std::string, int> dict;
          std::vector<std::string> ordered;
          std::vector<int> idx;
          idx.reserve(td.pkeys.size());
          bool any_missing = false;
          for (size_t r = 0; r < csv.rows.size(); ++r) {
            if (!keep[t][r]) continue;
            const std::string& v = csv.rows[r][csv_col];
            if (v.empty()) {
              any_missing = true;
              idx.push_back(-1);
              continue;
            }
            auto [it, fresh] = dict.emplace(v, static_cast<int>(ordered.size()));
            if (fresh) ordered.push_back(v);
            idx.push_back(it->second);
          }
          if (any_missing) {
            const int missing_idx = static_cast<int>(ordered.size());
            ordered.emplace_back();
            for (int& v : idx)
              if (v < 0) v = missing_idx;
          }
          td.category_names.push_back(col.name);
          td.cardinalities.push_back(static_cast<int>(ordered.size()));
          td.category_dicts.push_back(std::move(ordered));
          td.categories.push_back(std::move(idx));
          break;
        }
        case ColumnKind::kNumerical:
        case ColumnKind::kTemporal: {
          std::vector<double> vals;
          vals.reserve(td.pkeys.size());
          for (size_t r = 0; r < csv.rows.size(); ++r) {
            if (!keep[t][r]) continue;
            const std::string& v = csv.rows[r][csv_col];
            if (v.empty()) {
              vals.push_back(std::nan(""));
            } else if (col.kind == ColumnKind::kTemporal) {
              vals.push_back(parse_temporal(v));
            } else {
              vals.push_back(parse_numeric_cell(v, where));
            }
          }
          td.numeric_names.push_back(col.name);
          numeric_cols.push_back(std::move(vals));
          break;
        }
      }
    }
    td.numeric = Mat(td.rows(), static_cast<int>(numeric_cols.size()));
    for (size_t j = 0; j < numeric_cols.size(); ++j)
      for (int i = 0; i < td.rows(); ++i)
        td.numeric(i, static_cast<int>(j)) = numeric_cols[j][i];
  }

  // Labels and splits for kept target rows.
  {
    const CsvTable& csv = *csvs[tgt];
    const TableSpec& spec = schema.tables[tgt];
    for (size_t r = 0; r < csv.rows.size(); ++r) {
      if (!keep[tgt][r]) continue;
      const std::string& cell = csv.rows[r][maps[tgt].label_col];
      if (cell.empty())
        throw ValidationError("missing label on target row with key '" +
                              csv.rows[r][maps[tgt].csv_col[spec.primary_key]] +
                              "'");
      if (schema.task == Task::kClassification) {
        const long v = parse_int_cell(cell, "label column");
        if (v < 0 || v >= schema.num_classes)
          throw ValidationError("class label " + std::to_string(v) +
                                " outside [0, " +
                                std::to_string(schema.num_classes) + ")");
        rdb.class_labels.push_back(static_cast<int>(v));
      } else {
        rdb.labels.push_back(parse_numeric_cell(cell, "label column"));
      }
      if (maps[tgt].split_col >= 0) {
        const std::string& s = csv.rows[r][maps[tgt].split_col];
        if (s == "train") rdb.splits.push_back(Split::kTrain);
        else if (s == "val") rdb.splits.push_back(Split::kVal);
        else if (s == "test") rdb.splits.push_back(Split::kTest);
        else
          throw ValidationError("split value '" + s +
                                "' not one of train/val/test");
      } else {
        rdb.splits.push_back(
            split_of_key(csv.rows[r][maps[tgt].csv_col[spec.primary_key]]));
      }
    }
  }

  // Mean-impute missing numerics from training-visible rows.
  std::vector<int> train_rows = rdb.rows_in_split(Split::kTrain);
  for (int t = 0; t < n_tables; ++t) {
    TableData& td = rdb.tables[t];
    const std::vector<int> visible =
        (t == tgt && !train_rows.empty()) ? train_rows : all_rows(td.rows());
    for (int j = 0; j < td.numeric.cols(); ++j) {
      double sum = 0.0;
      std::int64_t n = 0;
      for (int i : visible) {
        if (!std::isnan(td.numeric(i, j))) {
          sum += td.numeric(i, j);
          ++n;
        }
      }
      const double fill = n > 0 ? sum / static_cast<double>(n) : 0.0;
      for (int i = 0; i < td.rows(); ++i)
        if (std::isnan(td.numeric(i, j))) td.numeric(i, j) = fill;
    }
  }

  return rdb;
}

RdbInstance load_rdb_dir(const Schema& schema, const std::string& data_dir,
                         LoadReport* report) {
  std::map<std::string, CsvTable> sources;
  for (const TableSpec& table : schema.tables) {
    const auto path = std::filesystem::path(data_dir) / (table.name + ".csv");
    sources.emplace(table.name, read_csv_file(path.string()));
  }
  return load_rdb(schema, sources, report);
}

void normalize(RdbInstance& rdb) {
  if (rdb.normalized) throw ValidationError("rdb is already normalized");
  const int tgt = rdb.target_index();
  const std::vector<int> train_rows = rdb.rows_in_split(Split::kTrain);
  rdb.norm_stats.assign(rdb.tables.size(), {});
  for (size_t t = 0; t < rdb.tables.size(); ++t) {
    TableData& td = rdb.tables[t];
    NormStats& ns = rdb.norm_stats[t];
    const std::vector<int> visible =
        (static_cast<int>(t) == tgt && !train_rows.empty())
            ? train_rows
            : all_rows(td.rows());
    for (int j = 0; j < td.numeric.cols(); ++j) {
      double mean = 0.0, var = 0.0;
      if (!visible.empty()) {
        for (int i : visible) mean += td.numeric(i, j);
        mean /= static_cast<double>(visible.size());
        for (int i : visible) {
          const double d = td.numeric(i, j) - mean;
          var += d * d;
        }
        var /= static_cast<double>(visible.size());
      }
      const double stddev = std::sqrt(var);
      ns.mean.push_back(mean);
      if (stddev < 1e-12) {
        ns.stddev.push_back(0.0);
        for (int i = 0; i < td.rows(); ++i) td.numeric(i, j) = 0.0;
      } else {
        ns.stddev.push_back(stddev);
        for (int i = 0; i < td.rows(); ++i)
          td.numeric(i, j) = (td.numeric(i, j) - mean) / stddev;
      }
    }
  }
  rdb.normalized = true;
}

namespace {
constexpr char kRdbMagic[4] = {'T', '2', 'G', 'R'};
constexpr std::uint32_t kRdbVersion = 1;
}  // namespace

void write_rdb(const RdbInstance& rdb, ByteWriter& out) {
  out.bytes(kRdbMagic, 4);
  out.u32(kRdbVersion);
  out.str(canonical_schema_json(rdb.schema));
  out.u8(rdb.normalized ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(rdb.tables.size()));
  for (const TableData& td : rdb.tables) {
    out.u32(static_cast<std::uint32_t>(td.rows()));
    for (const std::string& k : td.pkeys) out.str(k);
    out.u32(static_cast<std::uint32_t>(td.fk_rows.size()));
    for (size_t c = 0; c < td.fk_rows.size(); ++c) {
      out.str(td.fk_names[c]);
      for (int v : td.fk_rows[c]) out.u32(static_cast<std::uint32_t>(v));
    }
    out.u32(static_cast<std::uint32_t>(td.numeric.cols()));
    for (const std::string& n : td.numeric_names) out.str(n);
    for (int i = 0; i < td.numeric.rows() * td.numeric.cols(); ++i)
      out.f64(td.numeric.data()[i]);
    out.u32(static_cast<std::uint32_t>(td.categories.size()));
    for (size_t c = 0; c < td.categories.size(); ++c) {
      out.str(td.category_names[c]);
      out.u32(static_cast<std::uint32_t>(td.cardinalities[c]));
      for (const std::string& s : td.category_dicts[c]) out.str(s);
      for (int v : td.categories[c]) out.u32(static_cast<std::uint32_t>(v));
    }
    out.i64(td.dropped_rows);
  }
  const std::uint32_t n_target =
      static_cast<std::uint32_t>(rdb.splits.size());
  out.u32(n_target);
  if (rdb.schema.task == Task::kClassification) {
    for (int v : rdb.class_labels) out.u32(static_cast<std::uint32_t>(v));
  } else {
    for (double v : rdb.labels) out.f64(v);
  }
  for (Split s : rdb.splits) out.u8(static_cast<std::uint8_t>(s));
  out.u32(static_cast<std::uint32_t>(rdb.norm_stats.size()));
  for (const NormStats& ns : rdb.norm_stats) {
    out.u32(static_cast<std::uint32_t>(ns.mean.size()));
    for (double v : ns.mean) out.f64(v);
    for (double v : ns.stddev) out.f64(v);
  }
}

RdbInstance read_rdb(ByteReader& in) {
  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, kRdbMagic, 4) != 0)
    throw ValidationError("not an rdb stream");
  if (in.u32() != kRdbVersion)
    throw ValidationError("unsupported rdb stream version");
  RdbInstance rdb;
  rdb.schema = parse_schema(in.str());
  rdb.normalized = in.u8() != 0;
  const std::uint32_t n_tables = in.u32();
  if (n_tables != rdb.schema.tables.size())
    throw ValidationError("rdb stream table count mismatch");
  rdb.tables.resize(n_tables);
  for (TableData& td : rdb.tables) {
    const std::uint32_t rows = in.u32();
    td.pkeys.resize(rows);
    for (auto& k : td.pkeys) k = in.str();
    const std::uint32_t n_fk = in.u32();
    td.fk_names.resize(n_fk);
    td.fk_rows.assign(n_fk, {});
    for (std::uint32_t c = 0; c < n_fk; ++c) {
      td.fk_names[c] = in.str();
      td.fk_rows[c].resize(rows);
      for (auto& v : td.fk_rows[c]) v = static_cast<int>(in.u32());
    }
    const std::uint32_t n_num = in.u32();
    td.numeric_names.resize(n_num);
    for (auto& n : td.numeric_names) n = in.str();
    td.numeric = Mat(static_cast<int>(rows), static_cast<int>(n_num));
    for (int i = 0; i < td.numeric.rows() * td.numeric.cols(); ++i)
      td.numeric.data()[i] = in.f64();
    const std::uint32_t n_cat = in.u32();
    td.category_names.resize(n_cat);
    td.cardinalities.resize(n_cat);
    td.category_dicts.assign(n_cat, {});
    td.categories.assign(n_cat, {});
    for (std::uint32_t c = 0; c < n_cat; ++c) {
      td.category_names[c] = in.str();
      td.cardinalities[c] = static_cast<int>(in.u32());
      td.category_dicts[c].resize(td.cardinalities[c]);
      for (auto& s : td.category_dicts[c]) s = in.str();
      td.categories[c].resize(rows);
      for (auto& v : td.categories[c]) v = static_cast<int>(in.u32());
    }
    td.dropped_rows = in.i64();
  }
  const std::uint32_t n_target = in.u32();
  if (rdb.schema.task == Task::kClassification) {
    rdb.class_labels.resize(n_target);
    for (auto& v : rdb.class_labels) v = static_cast<int>(in.u32());
  } else {
    rdb.labels.resize(n_target);
    for (auto& v : rdb.labels) v = in.f64();
  }
  rdb.splits.resize(n_target);
  for (auto& s : rdb.splits) s = static_cast<Split>(in.u8());
  const std::uint32_t n_stats = in.u32();
  rdb.norm_stats.assign(n_stats, {});
  for (NormStats& ns : rdb.norm_stats) {
    const std::uint32_t n_cols = in.u32();
    ns.mean.resize(n_cols);
    for (auto& v : ns.mean) v = in.f64();
    ns.stddev.resize(n_cols);
    for (auto& v : ns.stddev) v = in.f64();
  }
  return rdb;
}

void save_rdb_file(const RdbInstance& rdb, const std::string& path) {
  ByteWriter out;
  write_rdb(rdb, out);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write rdb file: " + path);
  f.write(out.data().data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ValidationError("failed writing rdb file: " + path);
}

RdbInstance load_rdb_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open rdb file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  ByteReader in(bytes);
  return read_rdb(in);
}

}  // namespace t2g
