#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dualres {

// Dense row-major matrix of doubles. Row vectors are (1 x n).
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat full(int r, int c, double v) {
    Mat m(r, c);
    for (auto& x : m.a) x = v;
    return m;
  }

  double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return a.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
};

// C = A * B, (m x k)(k x n).
Mat matmul(const Mat& A, const Mat& B);
// C = A * B^T, (m x k)(n x k) -> (m x n). Row-dot-row; the hot kernel.
Mat matmul_nt(const Mat& A, const Mat& B);
// C = A^T * B, (k x m)(k x n) -> (m x n).
Mat matmul_tn(const Mat& A, const Mat& B);

void add_inplace(Mat& A, const Mat& B);
Mat transpose(const Mat& A);
double max_abs_diff(const Mat& A, const Mat& B);

std::string shape_str(const Mat& m);

// FNV-1a 64-bit over a byte range; checkpoint and replay digests.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull);

}  // namespace dualres
