#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2g/hgnn.hpp"
#include "t2g/mat.hpp"
#include "t2g/rdb.hpp"
#include "t2g/reg.hpp"
#include "t2g/tokenizer.hpp"

namespace t2g {

// Cluster assignments per table; clusters index synthetic nodes downstream.
struct PseudoLabels {
  std::vector<std::vector<int>> assignments;  // per table, length n_T
  std::vector<Mat> centroids;                 // per table, n'_T x hidden
  std::vector<int> counts;                    // per table n'_T
};

struct PretrainConfig {
  int epochs = 50;
  double lr = 0.01;
  int recluster_period = 10;
  std::uint64_t seed = 0;
  double ratio = 0.01;  // synthetic rows per original training row
  int d_token = 8;
  int hidden = 64;
  int layers = 0;  // 0 means one layer per table
  double weight_decay = 5e-4;
};

// n'_T = max(1, round(r * n_T^train)); the target table counts its training
// rows, every other table all rows.
std::vector<int> allocate_counts(const RdbInstance& rdb, double ratio,
                                 std::vector<std::string>* warnings = nullptr);

struct KmeansResult {
  std::vector<int> assignments;
  Mat centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

// k-means++ seeding, Lloyd to assignment fixpoint or 100 iterations, empty
// clusters repaired by stealing the farthest point from the largest cluster.
KmeansResult kmeans(const Mat& points, int k, std::uint64_t seed);

// Proportional split of k among classes, floor one per class; sizes must all
// be positive and k >= number of classes.
std::vector<int> class_budgets(const std::vector<std::int64_t>& class_sizes,
                               int k);

// Clusters label-visible rows. Classification: per-class k-means over that
// class's embedding rows with proportional budgets, so no cluster ever mixes
// classes. Regression: 1-D k-means over the label values.
std::vector<int> target_pseudo_labels(const Mat& embeddings, Task task,
                                      const std::vector<double>& labels,
                                      const std::vector<int>& class_labels,
                                      int num_classes, int k,
                                      std::uint64_t seed);

struct PretrainResult {
  TokenizerBank bank;
  HgnnParams params;
  PseudoLabels pseudo;
  std::vector<double> loss_curve;  // one entry per epoch
};

// Alternates encoding, clustering refresh, and gradient steps on the
// tokenizers, the encoder, and per-table linear classification heads that
// are discarded afterwards.
PretrainResult pretrain(const RdbInstance& rdb, const Reg& reg,
                        const PretrainConfig& cfg);

}  // namespace t2g
