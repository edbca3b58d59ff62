#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2g/hgnn.hpp"
#include "t2g/mat.hpp"
#include "t2g/pretrain.hpp"
#include "t2g/rdb.hpp"
#include "t2g/reg.hpp"
#include "t2g/sbm.hpp"
#include "t2g/tape.hpp"
#include "t2g/tokenizer.hpp"

namespace t2g {

// The distilled dataset: cluster-level structure, learnable per-table token
// features, and learnable target labels. The synthetic pseudo-label matrix is
// the identity and is never materialized as a parameter.
struct SyntheticGraph {
  SyntheticStructure structure;
  std::vector<Mat> h;  // per table, n'_T x d_token
  Mat y;               // n'_tgt x label width
};

struct DistillConfig {
  int iterations = 500;
  double lr = 0.01;
  double lambda = 1e-2;  // ridge coefficient
  double beta = 1.0;     // pseudo-loss weight
  std::uint64_t seed = 0;
  // Encoder seed per iteration; derived from `seed` when left empty.
  std::vector<std::uint64_t> theta_seeds;
  int hidden = 64;
  int layers = 0;  // 0 -> one per table
};

struct LossBreakdown {
  double task = 0.0;
  double pseudo = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

// The fixed side of the objective: frozen tokenizer encodings of the original
// tables plus supervision matrices over the training rows of the target.
struct DistillProblem {
  const Reg* reg = nullptr;
  int target_table = 0;
  std::vector<Mat> features;   // per table, n_T x d_token
  std::vector<int> train_rows;
  Mat y_train;                 // one-hot classes, or standardized labels
  Mat pseudo_train;            // one-hot cluster ids
  double label_mean = 0.0;     // regression label standardization
  double label_std = 1.0;

  int label_dim() const { return y_train.cols(); }
};

DistillProblem make_problem(const RdbInstance& rdb, const Reg& reg,
                            const TokenizerBank& bank,
                            const PseudoLabels& pseudo);

// W = Z^T (Z Z^T + lambda I)^{-1} Y, differentiable in both z and y.
int krr_solve(Tape& tape, int z, int y, double lambda);

// Ridge fits W against y and against the identity on the synthetic
// embeddings, then measures both predictors on the original training rows
// under a freshly sampled encoder theta.
LossBreakdown compute_losses(const DistillProblem& problem,
                             const SyntheticGraph& graph,
                             const HgnnParams& theta, double beta,
                             double lambda);

struct LossGrads {
  LossBreakdown loss;
  std::vector<Mat> h;  // empty when no gradient reached a table
  Mat y;
};

// include_pseudo=false drops the pseudo term from the recorded program
// entirely instead of scaling it by zero.
LossGrads loss_gradients(const DistillProblem& problem,
                         const SyntheticGraph& graph, const HgnnParams& theta,
                         double beta, double lambda,
                         bool include_pseudo = true);

struct DistillResult {
  SyntheticGraph graph;
  std::vector<LossBreakdown> loss_log;
};

// Stage 3: initialize H' ~ N(0, 0.1^2) and Y' from cluster semantics, then
// iterate sample-theta / measure / step on H' and Y'.
DistillResult run_distillation(const RdbInstance& rdb, const Reg& reg,
                               const TokenizerBank& bank,
                               const PseudoLabels& pseudo,
                               const SyntheticStructure& structure,
                               const DistillConfig& cfg);

// "iter,L_task,L_pseudo,L_total" lines.
std::string loss_log_csv(const std::vector<LossBreakdown>& log);

}  // namespace t2g
