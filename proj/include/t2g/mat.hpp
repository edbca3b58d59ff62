#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace t2g {

// Dense row-major matrix of doubles. The single tensor type used everywhere;
// 64-bit throughout so solver and finite-difference tolerances hold.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0) {}
  Mat(int rows, int cols, double fill)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
    Mat m(r, c);
    int i = 0;
    for (const auto& row : rows) {
      int j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Plain (untaped) helpers shared by clustering, metrics, and tests.
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
double frob_norm_sq(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);
bool all_finite(const Mat& a);

// In-place p <- p - lr * (g + weight_decay * p).
void sgd_step(Mat& param, const Mat& grad, double lr, double weight_decay);

}  // namespace t2g
