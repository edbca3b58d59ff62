#include "t2g/tokenizer.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

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

std::int64_t TableTokenizer::parameter_count() const {
  return static_cast<std::int64_t>(w_num.rows()) * w_num.cols() +
         static_cast<std::int64_t>(e_cat.rows()) * e_cat.cols() +
         static_cast<std::int64_t>(bias.rows()) * bias.cols();
}

TokenizerBank init_bank(const RdbInstance& rdb, int d_token,
                        std::uint64_t seed) {
  if (d_token < 1) throw ValidationError("d_token must be positive");
  TokenizerBank bank;
  bank.d_token = d_token;
  bank.norm_stats = rdb.norm_stats;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_token));
  Rng rng(seed);
  for (const TableData& td : rdb.tables) {
    TableTokenizer tok;
    const int d_num = td.numeric.cols();
    const int total_cats =
        std::accumulate(td.cardinalities.begin(), td.cardinalities.end(), 0);
    tok.w_num = uniform_mat(d_num, d_token, bound, rng);
    tok.e_cat = uniform_mat(total_cats, d_token, bound, rng);
    int offset = 0;
    for (int c : td.cardinalities) {
      tok.cat_offsets.push_back(offset);
      offset += c;
    }
    if (d_num == 0 && total_cats == 0)
      tok.bias = uniform_mat(1, d_token, bound, rng);
    bank.tables.push_back(std::move(tok));
  }
  return bank;
}

BoundBank bind_bank(Tape& tape, const TokenizerBank& bank, bool trainable) {
  BoundBank bound;
  for (const TableTokenizer& tok : bank.tables) {
    BoundTokenizer b;
    if (tok.w_num.rows() > 0) b.w_num = tape.leaf(tok.w_num, trainable);
    if (tok.e_cat.rows() > 0) b.e_cat = tape.leaf(tok.e_cat, trainable);
    if (tok.has_bias()) b.bias = tape.leaf(tok.bias, trainable);
    bound.tables.push_back(b);
  }
  return bound;
}

int encode_table(Tape& tape, const BoundBank& bound, const TokenizerBank& bank,
                 const RdbInstance& rdb, int table) {
  if (bank.tables.size() != rdb.tables.size() ||
      bound.tables.size() != rdb.tables.size())
    throw ValidationError("tokenizer bank does not match the rdb table list");
  if (table < 0 || table >= static_cast<int>(rdb.tables.size()))
    throw ValidationError("encode_table: table index out of range");
  const TableData& td = rdb.tables[table];
  const TableTokenizer& tok = bank.tables[table];
  const BoundTokenizer& b = bound.tables[table];
  if (tok.w_num.rows() != td.numeric.cols())
    throw ValidationError("tokenizer numeric width mismatch");
  const int expected_cats =
      std::accumulate(td.cardinalities.begin(), td.cardinalities.end(), 0);
  if (tok.e_cat.rows() != expected_cats)
    throw ValidationError("tokenizer categorical rows mismatch");

  const int n = td.rows();
  int acc = -1;
  int terms = 0;
  if (td.numeric.cols() > 0) {
    acc = tape.matmul(tape.leaf(td.numeric, false), b.w_num);
    terms += td.numeric.cols();
  }
  for (size_t c = 0; c < td.categories.size(); ++c) {
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i)
      rows[i] = tok.cat_offsets[c] + td.categories[c][i];
    const int looked_up = tape.row_gather(b.e_cat, std::move(rows));
    acc = acc < 0 ? looked_up : tape.add(acc, looked_up);
    ++terms;
  }
  if (terms == 0)
    return tape.row_gather(b.bias, std::vector<int>(n, 0));
  return tape.scale(acc, 1.0 / static_cast<double>(terms));
}

std::vector<int> encode_all(Tape& tape, const BoundBank& bound,
                            const TokenizerBank& bank, const RdbInstance& rdb) {
  std::vector<int> out;
  for (size_t t = 0; t < rdb.tables.size(); ++t)
    out.push_back(encode_table(tape, bound, bank, rdb, static_cast<int>(t)));
  return out;
}

void bank_sgd_step(TokenizerBank& bank, const Tape& tape,
                   const BoundBank& bound, double lr, double weight_decay) {
  for (size_t t = 0; t < bank.tables.size(); ++t) {
    TableTokenizer& tok = bank.tables[t];
    const BoundTokenizer& b = bound.tables[t];
    if (b.w_num >= 0 && tape.grad(b.w_num).rows() > 0)
      sgd_step(tok.w_num, tape.grad(b.w_num), lr, weight_decay);
    if (b.e_cat >= 0 && tape.grad(b.e_cat).rows() > 0)
      sgd_step(tok.e_cat, tape.grad(b.e_cat), lr, weight_decay);
    if (b.bias >= 0 && tape.grad(b.bias).rows() > 0)
      sgd_step(tok.bias, tape.grad(b.bias), lr, weight_decay);
  }
}

namespace {

void write_mat(const Mat& m, ByteWriter& out) {
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  for (int i = 0; i < m.rows() * m.cols(); ++i) out.f64(m.data()[i]);
}

Mat read_mat(ByteReader& in) {
  const int rows = static_cast<int>(in.u32());
  const int cols = static_cast<int>(in.u32());
  Mat m(rows, cols);
  for (int i = 0; i < rows * cols; ++i) m.data()[i] = in.f64();
  return m;
}

}  // namespace

void write_bank(const TokenizerBank& bank, ByteWriter& out) {
  out.u32(static_cast<std::uint32_t>(bank.d_token));
  out.u32(static_cast<std::uint32_t>(bank.tables.size()));
  for (const TableTokenizer& tok : bank.tables) {
    write_mat(tok.w_num, out);
    write_mat(tok.e_cat, out);
    out.u8(tok.has_bias() ? 1 : 0);
    if (tok.has_bias()) write_mat(tok.bias, out);
    out.u32(static_cast<std::uint32_t>(tok.cat_offsets.size()));
    for (int o : tok.cat_offsets) out.u32(static_cast<std::uint32_t>(o));
  }
  out.u32(static_cast<std::uint32_t>(bank.norm_stats.size()));
  for (const NormStats& ns : bank.norm_stats) {
    out.u32(static_cast<std::uint32_t>(ns.mean.size()));
    for (double v : ns.mean) out.f64(v);
    for (double v : ns.stddev) out.f64(v);
  }
}

TokenizerBank read_bank(ByteReader& in) {
  TokenizerBank bank;
  bank.d_token = static_cast<int>(in.u32());
  const std::uint32_t n_tables = in.u32();
  for (std::uint32_t t = 0; t < n_tables; ++t) {
    TableTokenizer tok;
    tok.w_num = read_mat(in);
    tok.e_cat = read_mat(in);
    if (in.u8()) tok.bias = read_mat(in);
    const std::uint32_t n_off = in.u32();
    tok.cat_offsets.resize(n_off);
    for (auto& o : tok.cat_offsets) o = static_cast<int>(in.u32());
    bank.tables.push_back(std::move(tok));
  }
  const std::uint32_t n_stats = in.u32();
  bank.norm_stats.assign(n_stats, {});
  for (NormStats& ns : bank.norm_stats) {
    const std::uint32_t n_cols = in.u32();
    ns.mean.resize(n_cols);
    for (auto& v : ns.mean) v = in.f64();
    ns.stddev.resize(n_cols);
    for (auto& v : ns.stddev) v = in.f64();
  }
  return bank;
}

std::int64_t bank_storage_bytes(const TokenizerBank& bank) {
  ByteWriter out;
  write_bank(bank, out);
  return static_cast<std::int64_t>(out.size());
}

}  // namespace t2g
