#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dualres/mat.hpp"

namespace dualres {

// Desk-scale defaults; d_text is the backbone width and the grouped width
// d_g must be divisible by k (segment width d_g/k feeds the refine head).
struct ModelConfig {
  int vocab_text = 256;
  int vocab_speech = 512;
  int k = 5;
  int d_s = 16;
  int d_text = 64;
  int d_g = 80;
  int layers = 2;
  int heads = 4;
  int max_frames = 128;
  int srh_layers = 1;
  int srh_heads = 2;
  double lambda_text = 1.0;

  int d_seg() const { return d_g / k; }
  void validate() const;
};

// Named tensors; map keeps a stable sorted order for serialization, merge
// and optimizer iteration.
struct ParamSet {
  std::map<std::string, Mat> t;

  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool has(const std::string& name) const { return t.count(name) > 0; }
  bool same_shapes(const ParamSet& o) const;
  size_t scalar_count() const;
};

// Deterministic init: tensors are created in a fixed order from one seeded
// generator; weights and tables are uniform +-1/sqrt(fan_in), biases zero,
// norm gains one. Values are rounded to float32 so the in-memory state always
// equals its checkpoint image.
ParamSet init_params(const ModelConfig& cfg, uint64_t seed);

using GradMap = std::map<std::string, Mat>;

}  // namespace dualres
