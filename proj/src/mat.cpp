#include "t2g/mat.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>

#include "t2g/errors.hpp"

namespace t2g {

namespace {
using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMat>;
using Map = Eigen::Map<EigenRowMat>;
}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw ValidationError("matmul: inner dimensions disagree");
  Mat out(a.rows(), b.cols());
  Map(out.data(), out.rows(), out.cols()) =
      MapConst(a.data(), a.rows(), a.cols()) * MapConst(b.data(), b.rows(), b.cols());
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double frob_norm_sq(const Mat& a) {
  double s = 0.0;
  const double* p = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += p[i] * p[i];
  return s;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ValidationError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Mat& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a.data()[i])) return false;
  return true;
}

void sgd_step(Mat& param, const Mat& grad, double lr, double weight_decay) {
  if (!param.same_shape(grad)) throw ValidationError("sgd_step: shape mismatch");
  double* p = param.data();
  const double* g = grad.data();
  for (std::size_t i = 0; i < param.size(); ++i)
    p[i] -= lr * (g[i] + weight_decay * p[i]);
}

}  // namespace t2g
