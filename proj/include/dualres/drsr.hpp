#pragma once

#include "dualres/mat.hpp"

namespace dualres {

// Downsample: concatenate each window of k embedding rows (time order) and
// apply the grouping weight W (d_out x k*d_in). (n*k, d_in) -> (n, d_out).
Mat group_embed(const Mat& emb_seq, const Mat& W, int k);

// Upsample: project each hidden row through W (d_g x d_h) and split the
// result into k equal-width segments. (n, d_h) -> (n*k, d_g/k), segment j of
// step i at row i*k + j.
Mat ungroup_hidden(const Mat& hidden, const Mat& W, int k);

}  // namespace dualres
