#include "dualres/mat.hpp"

#include <cmath>
#include <cstring>

#include "dualres/error.hpp"

namespace dualres {

bool Mat::all_finite() const {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_str(const Mat& m) {
  return "(" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")";
}

Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows)
    throw ShapeError("matmul " + shape_str(A) + " x " + shape_str(B));
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
    double* crow = &C.a[static_cast<size_t>(i) * C.cols];
    for (int k = 0; k < A.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return C;
}

Mat matmul_nt(const Mat& A, const Mat& B) {
  if (A.cols != B.cols)
    throw ShapeError("matmul_nt " + shape_str(A) + " x " + shape_str(B) + "^T");
  Mat C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
    double* crow = &C.a[static_cast<size_t>(i) * C.cols];
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = &B.a[static_cast<size_t>(j) * B.cols];
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
  return C;
}

Mat matmul_tn(const Mat& A, const Mat& B) {
  if (A.rows != B.rows)
    throw ShapeError("matmul_tn " + shape_str(A) + "^T x " + shape_str(B));
  Mat C(A.cols, B.cols);
  for (int k = 0; k < A.rows; ++k) {
    const double* arow = &A.a[static_cast<size_t>(k) * A.cols];
    const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
    for (int i = 0; i < A.cols; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = &C.a[static_cast<size_t>(i) * C.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return C;
}

void add_inplace(Mat& A, const Mat& B) {
  if (!A.same_shape(B))
    throw ShapeError("add " + shape_str(A) + " vs " + shape_str(B));
  for (size_t i = 0; i < A.a.size(); ++i) A.a[i] += B.a[i];
}

Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
  return T;
}

double max_abs_diff(const Mat& A, const Mat& B) {
  if (!A.same_shape(B))
    throw ShapeError("diff " + shape_str(A) + " vs " + shape_str(B));
  double m = 0.0;
  for (size_t i = 0; i < A.a.size(); ++i)
    m = std::max(m, std::fabs(A.a[i] - B.a[i]));
  return m;
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace dualres
