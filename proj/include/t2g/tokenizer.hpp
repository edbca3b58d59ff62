#pragma once

#include <cstdint>
#include <vector>

#include "t2g/mat.hpp"
#include "t2g/rdb.hpp"
#include "t2g/serialize.hpp"
#include "t2g/tape.hpp"

namespace t2g {

// Per-table column encoders: one projection row per numerical column and one
// lookup block per categorical column, concatenated with offsets. A table
// with no attribute columns gets a single learnable bias token instead.
struct TableTokenizer {
  Mat w_num;                     // d_num x d_token
  Mat e_cat;                     // (sum of cardinalities) x d_token
  Mat bias;                      // 1 x d_token, attribute-free tables only
  std::vector<int> cat_offsets;  // row offset of each categorical column

  bool has_bias() const { return bias.rows() == 1; }
  std::int64_t parameter_count() const;
  bool operator==(const TableTokenizer&) const = default;
};

struct TokenizerBank {
  int d_token = 0;
  std::vector<TableTokenizer> tables;
  std::vector<NormStats> norm_stats;  // copied from the source rdb

  bool operator==(const TokenizerBank&) const = default;
};

TokenizerBank init_bank(const RdbInstance& rdb, int d_token,
                        std::uint64_t seed);

struct BoundTokenizer {
  int w_num = -1;
  int e_cat = -1;
  int bias = -1;
};

struct BoundBank {
  std::vector<BoundTokenizer> tables;
};

BoundBank bind_bank(Tape& tape, const TokenizerBank& bank, bool trainable);

// Row v = mean over column tokens: x_{v,i} * w_num[i] for numerical columns
// and the looked-up e_cat row for categorical ones.
int encode_table(Tape& tape, const BoundBank& bound, const TokenizerBank& bank,
                 const RdbInstance& rdb, int table);
std::vector<int> encode_all(Tape& tape, const BoundBank& bound,
                            const TokenizerBank& bank, const RdbInstance& rdb);

void bank_sgd_step(TokenizerBank& bank, const Tape& tape,
                   const BoundBank& bound, double lr, double weight_decay);

void write_bank(const TokenizerBank& bank, ByteWriter& out);
TokenizerBank read_bank(ByteReader& in);
std::int64_t bank_storage_bytes(const TokenizerBank& bank);

}  // namespace t2g
