#pragma once

#include <cstdint>
#include <string>

#include "dualres/params.hpp"

namespace dualres {

struct CheckpointMeta {
  std::string stage;
  std::string plan;
  uint64_t digest = 0;
};

// Binary format, little-endian: magic, format version, stage tag, plan
// metadata, content digest, then (name, rows, cols, float32 payload) per
// tensor in sorted name order. Loading verifies the digest.
void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& stage, const std::string& plan);

ParamSet load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace dualres
