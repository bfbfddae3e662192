#include "dualres/drsr.hpp"

#include "dualres/error.hpp"

namespace dualres {

Mat group_embed(const Mat& emb_seq, const Mat& W, int k) {
  if (k < 1) throw ShapeError("grouping factor must be >= 1");
  if (emb_seq.rows % k != 0)
    throw ShapeError("cannot group " + std::to_string(emb_seq.rows) +
                     " rows by k=" + std::to_string(k));
  if (W.cols != k * emb_seq.cols)
    throw ShapeError("grouping weight " + shape_str(W) + " does not take k*" +
                     std::to_string(emb_seq.cols) + " inputs");
  const int n = emb_seq.rows / k;
  // Row-major (n*k, d_in) is already the (n, k*d_in) concatenation.
  Mat flat(n, k * emb_seq.cols);
  flat.a = emb_seq.a;
  return matmul_nt(flat, W);
}

Mat ungroup_hidden(const Mat& hidden, const Mat& W, int k) {
  if (k < 1) throw ShapeError("grouping factor must be >= 1");
  if (W.cols != hidden.cols)
    throw ShapeError("ungrouping weight " + shape_str(W) +
                     " does not take d_h=" + std::to_string(hidden.cols));
  if (W.rows % k != 0)
    throw ShapeError("grouped width " + std::to_string(W.rows) +
                     " is not divisible by k=" + std::to_string(k));
  Mat proj = matmul_nt(hidden, W);  // (n, d_g)
  Mat out(hidden.rows * k, W.rows / k);
  out.a = proj.a;  // contiguous split into k segments per row
  return out;
}

}  // namespace dualres
