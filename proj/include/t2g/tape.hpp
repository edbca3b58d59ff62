#pragma once

#include <cstdint>
#include <vector>

#include "t2g/mat.hpp"

namespace t2g {

// Neighborhoods of one relation in CSR form, indexed by destination node.
// Source lists are sorted ascending so reductions run in a fixed order.
struct CsrAdj {
  int num_src = 0;
  int num_dst = 0;
  std::vector<std::int64_t> offsets;  // num_dst + 1
  std::vector<int> srcs;

  std::int64_t degree(int dst) const { return offsets[dst + 1] - offsets[dst]; }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(srcs.size()); }
};

CsrAdj csr_from_edges(int num_src, int num_dst,
                      const std::vector<std::pair<int, int>>& src_dst_pairs);
CsrAdj csr_transpose(const CsrAdj& adj);

// Reverse-mode tape over dense matrices. One tape per optimization step:
// record the forward pass through the ops below, call backward(loss) on a
// 1x1 node, then read grad() off the leaves. Nodes whose inputs are all
// constants never receive a gradient and their backward is skipped.
class Tape {
 public:
  int leaf(Mat value, bool requires_grad = false);

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double s);
  int relu(int a);
  int transpose(int a);
  int concat_rows(int a, int b);
  int row_gather(int a, std::vector<int> rows);
  // out[v] = mean of input rows listed under v; zero row when v has no
  // neighbors. `adj` must outlive the tape.
  int scatter_mean(int src, const CsrAdj& adj);
  // n x d plus a 1 x d row added to every row.
  int add_row_broadcast(int a, int bias);
  int add_scaled_identity(int a, double lambda);
  // Solve A X = B for symmetric positive definite A (symmetrized internally,
  // Cholesky with escalating diagonal jitter on breakdown).
  int spd_solve(int a, int b);
  int frob_sq(int a);  // 1x1
  // Mean over rows of -log softmax(logits)[target].
  int softmax_cross_entropy(int logits, std::vector<int> targets);
  // Mean over rows of -sum_j targets(i,j) * log softmax(logits)(i,j).
  int soft_cross_entropy(int logits, Mat targets);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  void backward(int loss_id);
  // Empty Mat when no gradient reached the node.
  const Mat& grad(int id) const { return nodes_[id].grad; }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kScale,
    kRelu,
    kTranspose,
    kConcatRows,
    kRowGather,
    kScatterMean,
    kAddRowBroadcast,
    kAddScaledIdentity,
    kSpdSolve,
    kFrobSq,
    kSoftmaxCrossEntropy,
    kSoftCrossEntropy,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Mat value;
    Mat grad;
    bool needs_grad = false;
    double scalar = 0.0;
    std::vector<int> indices;     // row_gather targets / hard CE labels
    const CsrAdj* adj = nullptr;  // scatter_mean
    Mat aux;  // cached Cholesky factor / softmax probabilities / soft targets
  };

  int emit(Node node);
  void accumulate(int id, const Mat& contribution);
  void check_node(int id) const;
  void backward_node(int id);

  std::vector<Node> nodes_;
};

}  // namespace t2g
