#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "t2g/distill.hpp"
#include "t2g/hgnn.hpp"
#include "t2g/mat.hpp"
#include "t2g/rdb.hpp"
#include "t2g/reg.hpp"
#include "t2g/tokenizer.hpp"

namespace t2g {

enum class ModelKind { kHgnn, kMlp };

struct EvalConfig {
  int epochs = 200;
  double lr = 0.01;
  double weight_decay = 5e-4;
  int d_token = 8;  // supervised trainers only; downstream takes the bank's
  int hidden = 64;
  int layers = 0;  // 0 -> one per table
  std::uint64_t seed = 0;
};

// Encoder plus linear head. The MLP variant keeps the same depth but drops
// every relation term, so only the node's own columns feed its prediction.
struct DownstreamModel {
  ModelKind kind = ModelKind::kHgnn;
  Task task = Task::kRegression;
  int target_table = 0;
  HgnnParams params;
  Mat head_w;  // hidden x label width
  Mat head_b;  // 1 x label width
  double label_mean = 0.0;
  double label_std = 1.0;
  std::vector<double> loss_curve;
};

double mae(const std::vector<double>& pred, const std::vector<double>& want);

// Trapezoidal ROC over binary labels; ties share area. Returns [0, 1].
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean one-vs-rest AUC over classes present in the labels.
double macro_ovr_auc(const Mat& probs, const std::vector<int>& labels);

// Rows clamped at zero and renormalized to sum one; all-zero rows go uniform.
Mat soft_targets(const Mat& y);

// Full-batch training on the distilled graph: every target node is a
// training example against its (soft) synthetic label.
DownstreamModel train_downstream(const SyntheticGraph& graph, int target_table,
                                 Task task, double label_mean,
                                 double label_std, ModelKind kind,
                                 const EvalConfig& cfg);

// Row subset per table plus the induced subgraph, relation ids preserved.
struct Subsample {
  Reg graph;
  std::vector<std::vector<int>> rows;  // original row ids, ascending
};

// ceil(r * n) rows per table, training rows only on the target table.
Subsample random_baseline(const RdbInstance& rdb, const Reg& reg, double r,
                          std::uint64_t seed);

// Task-supervised trainer for the baselines: learns its own tokenizer bank
// jointly with the model on the given row subset. Supervision comes from the
// training-split rows inside the subset.
struct SupervisedModel {
  DownstreamModel model;
  TokenizerBank bank;
};

SupervisedModel train_supervised(const RdbInstance& rdb,
                                 const Subsample& sample, ModelKind kind,
                                 const EvalConfig& cfg);

// The whole original database as one subsample.
Subsample full_sample(const RdbInstance& rdb, const Reg& reg);

// Encodes the split rows with the bank, runs the model over the full entity
// graph, and scores MAE (regression, de-standardized) or AUC x100.
double evaluate_model(const DownstreamModel& model, const TokenizerBank& bank,
                      const RdbInstance& rdb, const Reg& reg, Split split);

struct EvalReport {
  std::string config;
  std::string metric;  // "MAE" or "AUC"
  double mean = 0.0;
  double stddev = 0.0;
  double r = 0.0;
  double train_seconds = 0.0;
  std::int64_t rows_synthetic = 0;
  std::int64_t rows_original = 0;
};

std::pair<double, double> mean_std(const std::vector<double>& xs);

// "config,metric,mean,std,r,train_seconds,rows_synthetic,rows_original"
std::string report_csv(const std::vector<EvalReport>& reports);

}  // namespace t2g
