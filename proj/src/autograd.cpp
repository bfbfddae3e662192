#include "dualres/autograd.hpp"

#include <cmath>

#include "dualres/error.hpp"

namespace dualres::ad {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

int Tape::push(Mat val, bool needs, std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.needs = needs;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::g(int i) {
  Node& n = nodes_[i];
  if (!n.grad_alloc) {
    n.grad = Mat::zeros(n.val.rows, n.val.cols);
    n.grad_alloc = true;
  }
  return n.grad;
}

const Mat& Tape::grad(int i) { return g(i); }

int Tape::input(Mat v, bool requires_grad) {
  return push(std::move(v), requires_grad, nullptr);
}

void Tape::backward(int loss_node) {
  const Mat& lv = nodes_[loss_node].val;
  if (lv.rows != 1 || lv.cols != 1)
    throw ShapeError("backward seed must be scalar, got " + shape_str(lv));
  g(loss_node).at(0, 0) = 1.0;
  for (int i = loss_node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs || !n.grad_alloc || !n.back) continue;
    n.back(*this, i);
  }
}

int Tape::matmul(int a, int b) {
  Mat v = dualres::matmul(nodes_[a].val, nodes_[b].val);
  bool nd = needs(a) || needs(b);
  return push(std::move(v), nd, [a, b](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    if (t.needs(a)) add_inplace(t.g(a), dualres::matmul_nt(go, t.nodes_[b].val));
    if (t.needs(b)) add_inplace(t.g(b), matmul_tn(t.nodes_[a].val, go));
  });
}

int Tape::matmul_nt(int a, int b) {
  Mat v = dualres::matmul_nt(nodes_[a].val, nodes_[b].val);
  bool nd = needs(a) || needs(b);
  return push(std::move(v), nd, [a, b](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    if (t.needs(a)) add_inplace(t.g(a), dualres::matmul(go, t.nodes_[b].val));
    if (t.needs(b)) add_inplace(t.g(b), matmul_tn(go, t.nodes_[a].val));
  });
}

int Tape::add(int a, int b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (!A.same_shape(B))
    throw ShapeError("add " + shape_str(A) + " vs " + shape_str(B));
  Mat v = A;
  add_inplace(v, B);
  bool nd = needs(a) || needs(b);
  return push(std::move(v), nd, [a, b](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    if (t.needs(a)) add_inplace(t.g(a), go);
    if (t.needs(b)) add_inplace(t.g(b), go);
  });
}

int Tape::mul(int a, int b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (!A.same_shape(B))
    throw ShapeError("mul " + shape_str(A) + " vs " + shape_str(B));
  Mat v(A.rows, A.cols);
  for (size_t i = 0; i < v.a.size(); ++i) v.a[i] = A.a[i] * B.a[i];
  bool nd = needs(a) || needs(b);
  return push(std::move(v), nd, [a, b](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    if (t.needs(a)) {
      Mat& ga = t.g(a);
      const Mat& B2 = t.nodes_[b].val;
      for (size_t i = 0; i < ga.a.size(); ++i) ga.a[i] += go.a[i] * B2.a[i];
    }
    if (t.needs(b)) {
      Mat& gb = t.g(b);
      const Mat& A2 = t.nodes_[a].val;
      for (size_t i = 0; i < gb.a.size(); ++i) gb.a[i] += go.a[i] * A2.a[i];
    }
  });
}

int Tape::scale(int a, double s) {
  Mat v = nodes_[a].val;
  for (auto& x : v.a) x *= s;
  return push(std::move(v), needs(a), [a, s](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    Mat& ga = t.g(a);
    for (size_t i = 0; i < ga.a.size(); ++i) ga.a[i] += go.a[i] * s;
  });
}

int Tape::add_rowvec(int a, int b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (B.rows != 1 || B.cols != A.cols)
    throw ShapeError("add_rowvec " + shape_str(A) + " + " + shape_str(B));
  Mat v = A;
  for (int i = 0; i < v.rows; ++i)
    for (int j = 0; j < v.cols; ++j) v.at(i, j) += B.at(0, j);
  bool nd = needs(a) || needs(b);
  return push(std::move(v), nd, [a, b](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    if (t.needs(a)) add_inplace(t.g(a), go);
    if (t.needs(b)) {
      Mat& gb = t.g(b);
      for (int i = 0; i < go.rows; ++i)
        for (int j = 0; j < go.cols; ++j) gb.at(0, j) += go.at(i, j);
    }
  });
}

int Tape::add_const(int a, const Mat& c) {
  const Mat& A = nodes_[a].val;
  if (!A.same_shape(c))
    throw ShapeError("add_const " + shape_str(A) + " vs " + shape_str(c));
  Mat v = A;
  add_inplace(v, c);
  return push(std::move(v), needs(a), [a](Tape& t, int self) {
    if (t.needs(a)) add_inplace(t.g(a), t.nodes_[self].grad);
  });
}

int Tape::rows_gather(int table, const std::vector<int>& ids,
                      const std::vector<char>* zero_row) {
  const Mat& T = nodes_[table].val;
  if (zero_row && zero_row->size() != ids.size())
    throw ShapeError("rows_gather mask size mismatch");
  Mat v(static_cast<int>(ids.size()), T.cols);
  std::vector<char> mask(ids.size(), 0);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (zero_row && (*zero_row)[i]) {
      mask[i] = 1;
      continue;
    }
    if (ids[i] < 0 || ids[i] >= T.rows)
      throw DomainError("rows_gather id " + std::to_string(ids[i]) +
                        " out of range at position " + std::to_string(i));
    for (int j = 0; j < T.cols; ++j) v.at(static_cast<int>(i), j) = T.at(ids[i], j);
  }
  std::vector<int> ids_copy = ids;
  return push(std::move(v), needs(table),
              [table, ids_copy, mask](Tape& t, int self) {
                if (!t.needs(table)) return;
                const Mat& go = t.nodes_[self].grad;
                Mat& gt = t.g(table);
                for (size_t i = 0; i < ids_copy.size(); ++i) {
                  if (mask[i]) continue;
                  for (int j = 0; j < go.cols; ++j)
                    gt.at(ids_copy[i], j) += go.at(static_cast<int>(i), j);
                }
              });
}

int Tape::softmax_rows(int a) {
  const Mat& A = nodes_[a].val;
  Mat v(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double m = A.at(i, 0);
    for (int j = 1; j < A.cols; ++j) m = std::max(m, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      double e = std::exp(A.at(i, j) - m);
      v.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < A.cols; ++j) v.at(i, j) /= z;
  }
  return push(std::move(v), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& y = t.nodes_[self].val;
    const Mat& go = t.nodes_[self].grad;
    Mat& ga = t.g(a);
    for (int i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols; ++j) dot += go.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols; ++j)
        ga.at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
    }
  });
}

int Tape::layernorm_rows(int x, int gain, int bias, double eps) {
  const Mat& X = nodes_[x].val;
  const Mat& G = nodes_[gain].val;
  const Mat& B = nodes_[bias].val;
  if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
    throw ShapeError("layernorm params " + shape_str(G) + "," + shape_str(B) +
                     " vs " + shape_str(X));
  Mat xhat(X.rows, X.cols);
  std::vector<double> inv_sd(X.rows);
  Mat v(X.rows, X.cols);
  for (int i = 0; i < X.rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < X.cols; ++j) mu += X.at(i, j);
    mu /= X.cols;
    double var = 0.0;
    for (int j = 0; j < X.cols; ++j) {
      double d = X.at(i, j) - mu;
      var += d * d;
    }
    var /= X.cols;
    double is = 1.0 / std::sqrt(var + eps);
    inv_sd[i] = is;
    for (int j = 0; j < X.cols; ++j) {
      double h = (X.at(i, j) - mu) * is;
      xhat.at(i, j) = h;
      v.at(i, j) = h * G.at(0, j) + B.at(0, j);
    }
  }
  bool nd = needs(x) || needs(gain) || needs(bias);
  return push(std::move(v), nd,
              [x, gain, bias, xhat, inv_sd](Tape& t, int self) {
                const Mat& go = t.nodes_[self].grad;
                const Mat& G = t.nodes_[gain].val;
                const int n = go.cols;
                if (t.needs(gain)) {
                  Mat& gg = t.g(gain);
                  for (int i = 0; i < go.rows; ++i)
                    for (int j = 0; j < n; ++j)
                      gg.at(0, j) += go.at(i, j) * xhat.at(i, j);
                }
                if (t.needs(bias)) {
                  Mat& gb = t.g(bias);
                  for (int i = 0; i < go.rows; ++i)
                    for (int j = 0; j < n; ++j) gb.at(0, j) += go.at(i, j);
                }
                if (t.needs(x)) {
                  Mat& gx = t.g(x);
                  for (int i = 0; i < go.rows; ++i) {
                    double mean_dh = 0.0, mean_dh_xhat = 0.0;
                    for (int j = 0; j < n; ++j) {
                      double dh = go.at(i, j) * G.at(0, j);
                      mean_dh += dh;
                      mean_dh_xhat += dh * xhat.at(i, j);
                    }
                    mean_dh /= n;
                    mean_dh_xhat /= n;
                    for (int j = 0; j < n; ++j) {
                      double dh = go.at(i, j) * G.at(0, j);
                      gx.at(i, j) += inv_sd[i] * (dh - mean_dh -
                                                  xhat.at(i, j) * mean_dh_xhat);
                    }
                  }
                }
              });
}

int Tape::gelu(int a) {
  const Mat& A = nodes_[a].val;
  Mat v(A.rows, A.cols);
  for (size_t i = 0; i < A.a.size(); ++i) {
    double x = A.a[i];
    v.a[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return push(std::move(v), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    const Mat& X = t.nodes_[a].val;
    Mat& ga = t.g(a);
    for (size_t i = 0; i < X.a.size(); ++i) {
      double x = X.a[i];
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      ga.a[i] += go.a[i] * (cdf + x * pdf);
    }
  });
}

int Tape::softplus(int a) {
  const Mat& A = nodes_[a].val;
  Mat v(A.rows, A.cols);
  for (size_t i = 0; i < A.a.size(); ++i) {
    double x = A.a[i];
    v.a[i] = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return push(std::move(v), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    const Mat& X = t.nodes_[a].val;
    Mat& ga = t.g(a);
    for (size_t i = 0; i < X.a.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-X.a[i]));
      ga.a[i] += go.a[i] * s;
    }
  });
}

int Tape::slice_rows(int a, int r0, int n) {
  const Mat& A = nodes_[a].val;
  if (r0 < 0 || n < 0 || r0 + n > A.rows)
    throw ShapeError("slice_rows [" + std::to_string(r0) + "," +
                     std::to_string(r0 + n) + ") of " + shape_str(A));
  Mat v(n, A.cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < A.cols; ++j) v.at(i, j) = A.at(r0 + i, j);
  return push(std::move(v), needs(a), [a, r0](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    Mat& ga = t.g(a);
    for (int i = 0; i < go.rows; ++i)
      for (int j = 0; j < go.cols; ++j) ga.at(r0 + i, j) += go.at(i, j);
  });
}

int Tape::slice_cols(int a, int c0, int n) {
  const Mat& A = nodes_[a].val;
  if (c0 < 0 || n < 0 || c0 + n > A.cols)
    throw ShapeError("slice_cols [" + std::to_string(c0) + "," +
                     std::to_string(c0 + n) + ") of " + shape_str(A));
  Mat v(A.rows, n);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < n; ++j) v.at(i, j) = A.at(i, c0 + j);
  return push(std::move(v), needs(a), [a, c0](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    Mat& ga = t.g(a);
    for (int i = 0; i < go.rows; ++i)
      for (int j = 0; j < go.cols; ++j) ga.at(i, c0 + j) += go.at(i, j);
  });
}

int Tape::concat_rows(const std::vector<int>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows of nothing");
  int cols = nodes_[xs[0]].val.cols;
  int rows = 0;
  bool nd = false;
  for (int x : xs) {
    if (nodes_[x].val.cols != cols) throw ShapeError("concat_rows col mismatch");
    rows += nodes_[x].val.rows;
    nd = nd || needs(x);
  }
  Mat v(rows, cols);
  int r = 0;
  for (int x : xs) {
    const Mat& A = nodes_[x].val;
    for (int i = 0; i < A.rows; ++i, ++r)
      for (int j = 0; j < cols; ++j) v.at(r, j) = A.at(i, j);
  }
  std::vector<int> xs_copy = xs;
  return push(std::move(v), nd, [xs_copy](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    int r = 0;
    for (int x : xs_copy) {
      int nr = t.nodes_[x].val.rows;
      if (t.needs(x)) {
        Mat& gx = t.g(x);
        for (int i = 0; i < nr; ++i)
          for (int j = 0; j < go.cols; ++j) gx.at(i, j) += go.at(r + i, j);
      }
      r += nr;
    }
  });
}

int Tape::concat_cols(const std::vector<int>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols of nothing");
  int rows = nodes_[xs[0]].val.rows;
  int cols = 0;
  bool nd = false;
  for (int x : xs) {
    if (nodes_[x].val.rows != rows) throw ShapeError("concat_cols row mismatch");
    cols += nodes_[x].val.cols;
    nd = nd || needs(x);
  }
  Mat v(rows, cols);
  int c = 0;
  for (int x : xs) {
    const Mat& A = nodes_[x].val;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < A.cols; ++j) v.at(i, c + j) = A.at(i, j);
    c += A.cols;
  }
  std::vector<int> xs_copy = xs;
  return push(std::move(v), nd, [xs_copy](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    int c = 0;
    for (int x : xs_copy) {
      int nc = t.nodes_[x].val.cols;
      if (t.needs(x)) {
        Mat& gx = t.g(x);
        for (int i = 0; i < go.rows; ++i)
          for (int j = 0; j < nc; ++j) gx.at(i, j) += go.at(i, c + j);
      }
      c += nc;
    }
  });
}

int Tape::reshape_rows(int a, int r, int c) {
  const Mat& A = nodes_[a].val;
  if (static_cast<size_t>(r) * c != A.a.size())
    throw ShapeError("reshape " + shape_str(A) + " to (" + std::to_string(r) +
                     "x" + std::to_string(c) + ")");
  Mat v(r, c);
  v.a = A.a;
  return push(std::move(v), needs(a), [a](Tape& t, int self) {
    if (!t.needs(a)) return;
    const Mat& go = t.nodes_[self].grad;
    Mat& ga = t.g(a);
    for (size_t i = 0; i < ga.a.size(); ++i) ga.a[i] += go.a[i];
  });
}

int Tape::sum_scalars(const std::vector<int>& xs) {
  if (xs.empty()) throw ShapeError("sum_scalars of nothing");
  Mat v(1, 1);
  bool nd = false;
  for (int x : xs) {
    const Mat& A = nodes_[x].val;
    if (A.rows != 1 || A.cols != 1)
      throw ShapeError("sum_scalars on " + shape_str(A));
    v.at(0, 0) += A.at(0, 0);
    nd = nd || needs(x);
  }
  std::vector<int> xs_copy = xs;
  return push(std::move(v), nd, [xs_copy](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    for (int x : xs_copy)
      if (t.needs(x)) t.g(x).at(0, 0) += go.at(0, 0);
  });
}

int Tape::cross_entropy_sum(int logits, std::vector<int> targets,
                            std::vector<double> weights) {
  const Mat& L = nodes_[logits].val;
  if (static_cast<int>(targets.size()) != L.rows ||
      weights.size() != targets.size())
    throw ShapeError("cross_entropy_sum: " + std::to_string(targets.size()) +
                     " targets, " + std::to_string(weights.size()) +
                     " weights for " + shape_str(L));
  Mat probs(L.rows, L.cols);
  double total = 0.0;
  for (int i = 0; i < L.rows; ++i) {
    int t = targets[i];
    if (t < 0 || t >= L.cols)
      throw DomainError("cross_entropy target " + std::to_string(t) +
                        " out of range at row " + std::to_string(i));
    double m = L.at(i, 0);
    for (int j = 1; j < L.cols; ++j) m = std::max(m, L.at(i, j));
    double z = 0.0;
    for (int j = 0; j < L.cols; ++j) {
      double e = std::exp(L.at(i, j) - m);
      probs.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < L.cols; ++j) probs.at(i, j) /= z;
    double lse = m + std::log(z);
    total += weights[i] * (lse - L.at(i, t));
  }
  Mat v(1, 1);
  v.at(0, 0) = total;
  return push(std::move(v), needs(logits),
              [logits, targets = std::move(targets),
               weights = std::move(weights), probs](Tape& t, int self) {
                if (!t.needs(logits)) return;
                double up = t.nodes_[self].grad.at(0, 0);
                Mat& gl = t.g(logits);
                for (int i = 0; i < probs.rows; ++i) {
                  double w = up * weights[i];
                  if (w == 0.0) continue;
                  for (int j = 0; j < probs.cols; ++j)
                    gl.at(i, j) += w * probs.at(i, j);
                  gl.at(i, targets[i]) -= w;
                }
              });
}

}  // namespace dualres::ad
