#pragma once

#include <functional>
#include <vector>

#include "dualres/mat.hpp"

namespace dualres::ad {

// Reverse-mode autodiff over matrix ops. Nodes are appended in evaluation
// order, so a single reverse sweep visits children before parents.
class Tape {
 public:
  // requires_grad marks leaves whose gradient callers will read (parameters,
  // probe inputs). Gradients propagate only through subgraphs that need them.
  int input(Mat v, bool requires_grad);
  int constant(Mat v) { return input(std::move(v), false); }

  int matmul(int a, int b);     // (m,k)(k,n)
  int matmul_nt(int a, int b);  // (m,k)(n,k) -> (m,n): A * B^T
  int add(int a, int b);        // same shape
  int mul(int a, int b);        // elementwise
  int scale(int a, double s);
  int add_rowvec(int a, int b);  // b is (1,n), broadcast over rows of a
  int add_const(int a, const Mat& c);
  // out[i,:] = table[ids[i],:]; rows with zero_row[i] != 0 become zero and
  // receive no gradient (padding convention).
  int rows_gather(int table, const std::vector<int>& ids,
                  const std::vector<char>* zero_row = nullptr);
  int softmax_rows(int a);
  int layernorm_rows(int x, int gain, int bias, double eps = 1e-5);
  int gelu(int a);
  int softplus(int a);
  int slice_rows(int a, int r0, int n);
  int slice_cols(int a, int c0, int n);
  int concat_rows(const std::vector<int>& xs);
  int concat_cols(const std::vector<int>& xs);
  int reshape_rows(int a, int r, int c);
  // Sum of (1,1) nodes -> (1,1).
  int sum_scalars(const std::vector<int>& xs);
  // total = sum_i weights[i] * nll(softmax(logits[i,:]), targets[i]) -> (1,1)
  int cross_entropy_sum(int logits, std::vector<int> targets,
                        std::vector<double> weights);

  const Mat& val(int i) const { return nodes_[i].val; }
  // Valid after backward(); zero matrix if the node received no gradient.
  const Mat& grad(int i);
  void backward(int loss_node);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool needs = false;
    bool grad_alloc = false;
    std::function<void(Tape&, int)> back;
  };

  int push(Mat val, bool needs, std::function<void(Tape&, int)> back);
  bool needs(int i) const { return nodes_[i].needs; }
  Mat& g(int i);  // allocate-on-first-use gradient accumulator

  std::vector<Node> nodes_;
};

}  // namespace dualres::ad
