#include "t2g/tape.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "t2g/errors.hpp"

namespace t2g {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EigenRowMat>;
using ConstMapMat = Eigen::Map<const EigenRowMat>;

Mat symmetrize(const Mat& a) {
  Mat out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(i, j) = 0.5 * (a(i, j) + a(j, i));
  return out;
}

// X = L^-T (L^-1 B) where L is the cached lower Cholesky factor.
Mat chol_solve(const Mat& lower, const Mat& b) {
  Mat x = b;
  ConstMapMat l(lower.data(), lower.rows(), lower.cols());
  MapMat xm(x.data(), x.rows(), x.cols());
  l.triangularView<Eigen::Lower>().solveInPlace(xm);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(xm);
  return x;
}

}  // namespace

CsrAdj csr_from_edges(int num_src, int num_dst,
                      const std::vector<std::pair<int, int>>& src_dst_pairs) {
  CsrAdj adj;
  adj.num_src = num_src;
  adj.num_dst = num_dst;
  adj.offsets.assign(static_cast<size_t>(num_dst) + 1, 0);
  for (const auto& [s, d] : src_dst_pairs) {
    if (s < 0 || s >= num_src || d < 0 || d >= num_dst)
      throw ValidationError("edge endpoint out of range");
    ++adj.offsets[static_cast<size_t>(d) + 1];
  }
  for (int v = 0; v < num_dst; ++v) adj.offsets[v + 1] += adj.offsets[v];
  adj.srcs.resize(src_dst_pairs.size());
  std::vector<std::int64_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& [s, d] : src_dst_pairs) adj.srcs[cursor[d]++] = s;
  for (int v = 0; v < num_dst; ++v)
    std::sort(adj.srcs.begin() + adj.offsets[v],
              adj.srcs.begin() + adj.offsets[v + 1]);
  return adj;
}

CsrAdj csr_transpose(const CsrAdj& adj) {
  std::vector<std::pair<int, int>> flipped;
  flipped.reserve(adj.srcs.size());
  for (int v = 0; v < adj.num_dst; ++v)
    for (std::int64_t k = adj.offsets[v]; k < adj.offsets[v + 1]; ++k)
      flipped.emplace_back(v, adj.srcs[k]);
  return csr_from_edges(adj.num_dst, adj.num_src, flipped);
}

int Tape::emit(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw ValidationError("tape node id out of range");
}

int Tape::leaf(Mat value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return emit(std::move(n));
}

int Tape::matmul(int a, int b) {
  check_node(a);
  check_node(b);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  if (va.cols() != vb.rows()) throw ValidationError("matmul shape mismatch");
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = t2g::matmul(va, vb);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emit(std::move(n));
}

int Tape::add(int a, int b) {
  check_node(a);
  check_node(b);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  if (!va.same_shape(vb)) throw ValidationError("add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = Mat(va.rows(), va.cols());
  for (int i = 0; i < va.rows() * va.cols(); ++i)
    n.value.data()[i] = va.data()[i] + vb.data()[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emit(std::move(n));
}

int Tape::sub(int a, int b) {
  check_node(a);
  check_node(b);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  if (!va.same_shape(vb)) throw ValidationError("sub shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = Mat(va.rows(), va.cols());
  for (int i = 0; i < va.rows() * va.cols(); ++i)
    n.value.data()[i] = va.data()[i] - vb.data()[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emit(std::move(n));
}

int Tape::scale(int a, double s) {
  check_node(a);
  const Mat& va = nodes_[a].value;
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.value = Mat(va.rows(), va.cols());
  for (int i = 0; i < va.rows() * va.cols(); ++i)
    n.value.data()[i] = s * va.data()[i];
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::relu(int a) {
  check_node(a);
  const Mat& va = nodes_[a].value;
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.value = Mat(va.rows(), va.cols());
  for (int i = 0; i < va.rows() * va.cols(); ++i)
    n.value.data()[i] = va.data()[i] > 0.0 ? va.data()[i] : 0.0;
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::transpose(int a) {
  check_node(a);
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.value = t2g::transpose(nodes_[a].value);
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::concat_rows(int a, int b) {
  check_node(a);
  check_node(b);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  if (va.cols() != vb.cols()) throw ValidationError("concat_rows width mismatch");
  Node n;
  n.op = Op::kConcatRows;
  n.a = a;
  n.b = b;
  n.value = Mat(va.rows() + vb.rows(), va.cols());
  std::copy(va.data(), va.data() + va.rows() * va.cols(), n.value.data());
  std::copy(vb.data(), vb.data() + vb.rows() * vb.cols(),
            n.value.data() + va.rows() * va.cols());
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emit(std::move(n));
}

int Tape::row_gather(int a, std::vector<int> rows) {
  check_node(a);
  const Mat& va = nodes_[a].value;
  for (int r : rows)
    if (r < 0 || r >= va.rows())
      throw ValidationError("row_gather index out of range");
  Node n;
  n.op = Op::kRowGather;
  n.a = a;
  n.value = Mat(static_cast<int>(rows.size()), va.cols());
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(va.data() + static_cast<std::int64_t>(rows[i]) * va.cols(),
              va.data() + static_cast<std::int64_t>(rows[i] + 1) * va.cols(),
              n.value.data() + static_cast<std::int64_t>(i) * va.cols());
  n.indices = std::move(rows);
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::scatter_mean(int src, const CsrAdj& adj) {
  check_node(src);
  const Mat& vs = nodes_[src].value;
  if (vs.rows() != adj.num_src)
    throw ValidationError("scatter_mean source row count mismatch");
  Node n;
  n.op = Op::kScatterMean;
  n.a = src;
  n.adj = &adj;
  n.value = Mat(adj.num_dst, vs.cols());
  for (int v = 0; v < adj.num_dst; ++v) {
    const std::int64_t deg = adj.degree(v);
    if (deg == 0) continue;
    double* out = n.value.data() + static_cast<std::int64_t>(v) * vs.cols();
    for (std::int64_t k = adj.offsets[v]; k < adj.offsets[v + 1]; ++k) {
      const double* row =
          vs.data() + static_cast<std::int64_t>(adj.srcs[k]) * vs.cols();
      for (int j = 0; j < vs.cols(); ++j) out[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(deg);
    for (int j = 0; j < vs.cols(); ++j) out[j] *= inv;
  }
  n.needs_grad = nodes_[src].needs_grad;
  return emit(std::move(n));
}

int Tape::add_row_broadcast(int a, int bias) {
  check_node(a);
  check_node(bias);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[bias].value;
  if (vb.rows() != 1 || vb.cols() != va.cols())
    throw ValidationError("add_row_broadcast bias shape mismatch");
  Node n;
  n.op = Op::kAddRowBroadcast;
  n.a = a;
  n.b = bias;
  n.value = Mat(va.rows(), va.cols());
  for (int i = 0; i < va.rows(); ++i)
    for (int j = 0; j < va.cols(); ++j)
      n.value(i, j) = va(i, j) + vb(0, j);
  n.needs_grad = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  return emit(std::move(n));
}

int Tape::add_scaled_identity(int a, double lambda) {
  check_node(a);
  const Mat& va = nodes_[a].value;
  if (va.rows() != va.cols())
    throw ValidationError("add_scaled_identity needs a square matrix");
  Node n;
  n.op = Op::kAddScaledIdentity;
  n.a = a;
  n.scalar = lambda;
  n.value = va;
  for (int i = 0; i < va.rows(); ++i) n.value(i, i) += lambda;
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::spd_solve(int a, int b) {
  check_node(a);
  check_node(b);
  const Mat& va = nodes_[a].value;
  const Mat& vb = nodes_[b].value;
  if (va.rows() != va.cols()) throw ValidationError("spd_solve matrix not square");
  if (va.rows() != vb.rows()) throw ValidationError("spd_solve shape mismatch");

  Mat sym = symmetrize(va);
  const int dim = sym.rows();
  Mat lower(dim, dim);
  double jitter = 0.0;
  bool ok = false;
  while (true) {
    EigenRowMat work = ConstMapMat(sym.data(), dim, dim);
    for (int i = 0; i < dim; ++i) work(i, i) += jitter;
    Eigen::LLT<EigenRowMat> llt(work);
    if (llt.info() == Eigen::Success) {
      MapMat(lower.data(), dim, dim) = llt.matrixL();
      ok = true;
      break;
    }
    if (jitter >= 1e-4) break;
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
  }
  if (!ok) throw NumericalError("spd_solve: Cholesky failed even with jitter");

  Node n;
  n.op = Op::kSpdSolve;
  n.a = a;
  n.b = b;
  n.aux = std::move(lower);
  n.value = chol_solve(n.aux, vb);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return emit(std::move(n));
}

int Tape::frob_sq(int a) {
  check_node(a);
  const Mat& va = nodes_[a].value;
  double total = 0.0;
  for (int i = 0; i < va.rows() * va.cols(); ++i)
    total += va.data()[i] * va.data()[i];
  Node n;
  n.op = Op::kFrobSq;
  n.a = a;
  n.value = Mat(1, 1);
  n.value(0, 0) = total;
  n.needs_grad = nodes_[a].needs_grad;
  return emit(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, std::vector<int> targets) {
  check_node(logits);
  const Mat& vl = nodes_[logits].value;
  if (static_cast<int>(targets.size()) != vl.rows())
    throw ValidationError("softmax_cross_entropy target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= vl.cols())
      throw ValidationError("softmax_cross_entropy label out of range");

  Mat probs(vl.rows(), vl.cols());
  double loss = 0.0;
  for (int i = 0; i < vl.rows(); ++i) {
    double hi = vl(i, 0);
    for (int j = 1; j < vl.cols(); ++j) hi = std::max(hi, vl(i, j));
    double denom = 0.0;
    for (int j = 0; j < vl.cols(); ++j) denom += std::exp(vl(i, j) - hi);
    const double lse = hi + std::log(denom);
    for (int j = 0; j < vl.cols(); ++j)
      probs(i, j) = std::exp(vl(i, j) - lse);
    loss += lse - vl(i, targets[i]);
  }
  Node n;
  n.op = Op::kSoftmaxCrossEntropy;
  n.a = logits;
  n.value = Mat(1, 1);
  n.value(0, 0) = loss / vl.rows();
  n.indices = std::move(targets);
  n.aux = std::move(probs);
  n.needs_grad = nodes_[logits].needs_grad;
  return emit(std::move(n));
}

int Tape::soft_cross_entropy(int logits, Mat targets) {
  check_node(logits);
  const Mat& vl = nodes_[logits].value;
  if (!vl.same_shape(targets))
    throw ValidationError("soft_cross_entropy target shape mismatch");

  Mat probs(vl.rows(), vl.cols());
  double loss = 0.0;
  for (int i = 0; i < vl.rows(); ++i) {
    double hi = vl(i, 0);
    for (int j = 1; j < vl.cols(); ++j) hi = std::max(hi, vl(i, j));
    double denom = 0.0;
    for (int j = 0; j < vl.cols(); ++j) denom += std::exp(vl(i, j) - hi);
    const double lse = hi + std::log(denom);
    for (int j = 0; j < vl.cols(); ++j) {
      probs(i, j) = std::exp(vl(i, j) - lse);
      loss += targets(i, j) * (lse - vl(i, j));
    }
  }
  Node n;
  n.op = Op::kSoftCrossEntropy;
  n.a = logits;
  n.value = Mat(1, 1);
  n.value(0, 0) = loss / vl.rows();
  n.aux = std::move(probs);
  // Targets ride along as a constant leaf so backward can reach them.
  n.b = leaf(std::move(targets), false);
  n.needs_grad = nodes_[logits].needs_grad;
  return emit(std::move(n));
}

void Tape::accumulate(int id, const Mat& contribution) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.rows() == 0) {
    n.grad = contribution;
    return;
  }
  for (int i = 0; i < n.grad.rows() * n.grad.cols(); ++i)
    n.grad.data()[i] += contribution.data()[i];
}

void Tape::backward(int loss_id) {
  check_node(loss_id);
  const Node& loss = nodes_[loss_id];
  if (loss.value.rows() != 1 || loss.value.cols() != 1)
    throw ValidationError("backward expects a scalar loss node");
  if (!loss.needs_grad)
    throw ValidationError("backward on a node with no grad path");

  Mat seed(1, 1);
  seed(0, 0) = 1.0;
  nodes_[loss_id].grad = seed;
  for (int id = loss_id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.rows() == 0) continue;
    backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Mat& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      if (nodes_[n.a].needs_grad)
        accumulate(n.a, t2g::matmul(g, t2g::transpose(nodes_[n.b].value)));
      if (nodes_[n.b].needs_grad)
        accumulate(n.b, t2g::matmul(t2g::transpose(nodes_[n.a].value), g));
      break;
    }
    case Op::kAdd:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::kSub: {
      accumulate(n.a, g);
      if (nodes_[n.b].needs_grad) {
        Mat neg(g.rows(), g.cols());
        for (int i = 0; i < g.rows() * g.cols(); ++i)
          neg.data()[i] = -g.data()[i];
        accumulate(n.b, neg);
      }
      break;
    }
    case Op::kScale: {
      if (n.scalar == 0.0) break;  // keep zero-weight terms out of the trajectory
      Mat scaled(g.rows(), g.cols());
      for (int i = 0; i < g.rows() * g.cols(); ++i)
        scaled.data()[i] = n.scalar * g.data()[i];
      accumulate(n.a, scaled);
      break;
    }
    case Op::kRelu: {
      const Mat& va = nodes_[n.a].value;
      Mat masked(g.rows(), g.cols());
      for (int i = 0; i < g.rows() * g.cols(); ++i)
        masked.data()[i] = va.data()[i] > 0.0 ? g.data()[i] : 0.0;
      accumulate(n.a, masked);
      break;
    }
    case Op::kTranspose:
      accumulate(n.a, t2g::transpose(g));
      break;
    case Op::kConcatRows: {
      const Mat& va = nodes_[n.a].value;
      const Mat& vb = nodes_[n.b].value;
      if (nodes_[n.a].needs_grad) {
        Mat top(va.rows(), va.cols());
        std::copy(g.data(), g.data() + va.rows() * va.cols(), top.data());
        accumulate(n.a, top);
      }
      if (nodes_[n.b].needs_grad) {
        Mat bottom(vb.rows(), vb.cols());
        std::copy(g.data() + va.rows() * va.cols(),
                  g.data() + g.rows() * g.cols(), bottom.data());
        accumulate(n.b, bottom);
      }
      break;
    }
    case Op::kRowGather: {
      const Mat& va = nodes_[n.a].value;
      Mat scattered(va.rows(), va.cols());
      for (size_t i = 0; i < n.indices.size(); ++i) {
        double* dst = scattered.data() +
                      static_cast<std::int64_t>(n.indices[i]) * va.cols();
        const double* src = g.data() + static_cast<std::int64_t>(i) * va.cols();
        for (int j = 0; j < va.cols(); ++j) dst[j] += src[j];
      }
      accumulate(n.a, scattered);
      break;
    }
    case Op::kScatterMean: {
      const Mat& va = nodes_[n.a].value;
      const CsrAdj& adj = *n.adj;
      Mat scattered(va.rows(), va.cols());
      for (int v = 0; v < adj.num_dst; ++v) {
        const std::int64_t deg = adj.degree(v);
        if (deg == 0) continue;
        const double inv = 1.0 / static_cast<double>(deg);
        const double* grow = g.data() + static_cast<std::int64_t>(v) * g.cols();
        for (std::int64_t k = adj.offsets[v]; k < adj.offsets[v + 1]; ++k) {
          double* dst = scattered.data() +
                        static_cast<std::int64_t>(adj.srcs[k]) * va.cols();
          for (int j = 0; j < va.cols(); ++j) dst[j] += inv * grow[j];
        }
      }
      accumulate(n.a, scattered);
      break;
    }
    case Op::kAddRowBroadcast: {
      accumulate(n.a, g);
      if (nodes_[n.b].needs_grad) {
        Mat colsum(1, g.cols());
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) colsum(0, j) += g(i, j);
        accumulate(n.b, colsum);
      }
      break;
    }
    case Op::kAddScaledIdentity:
      accumulate(n.a, g);
      break;
    case Op::kSpdSolve: {
      // X = A^-1 B with A symmetrized. dB = A^-1 g; dA = -sym(dB X^T).
      Mat gb = chol_solve(n.aux, g);
      if (nodes_[n.a].needs_grad) {
        Mat outer = t2g::matmul(gb, t2g::transpose(n.value));
        Mat ga(outer.rows(), outer.cols());
        for (int i = 0; i < outer.rows(); ++i)
          for (int j = 0; j < outer.cols(); ++j)
            ga(i, j) = -0.5 * (outer(i, j) + outer(j, i));
        accumulate(n.a, ga);
      }
      if (nodes_[n.b].needs_grad) accumulate(n.b, gb);
      break;
    }
    case Op::kFrobSq: {
      const Mat& va = nodes_[n.a].value;
      const double s = 2.0 * g(0, 0);
      Mat ga(va.rows(), va.cols());
      for (int i = 0; i < va.rows() * va.cols(); ++i)
        ga.data()[i] = s * va.data()[i];
      accumulate(n.a, ga);
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      const Mat& probs = n.aux;
      const double s = g(0, 0) / probs.rows();
      Mat ga = probs;
      for (int i = 0; i < probs.rows(); ++i) ga(i, n.indices[i]) -= 1.0;
      for (int i = 0; i < ga.rows() * ga.cols(); ++i) ga.data()[i] *= s;
      accumulate(n.a, ga);
      break;
    }
    case Op::kSoftCrossEntropy: {
      const Mat& probs = n.aux;
      const Mat& targets = nodes_[n.b].value;
      const double s = g(0, 0) / probs.rows();
      Mat ga(probs.rows(), probs.cols());
      for (int i = 0; i < probs.rows(); ++i) {
        double mass = 0.0;
        for (int j = 0; j < probs.cols(); ++j) mass += targets(i, j);
        for (int j = 0; j < probs.cols(); ++j)
          ga(i, j) = s * (mass * probs(i, j) - targets(i, j));
      }
      accumulate(n.a, ga);
      break;
    }
  }
}

}  // namespace t2g
