#include "dualres/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "dualres/error.hpp"

namespace dualres {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) {
    if (pos + n > buf.size())
      throw CheckpointError("truncated checkpoint file " + path);
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string tensor_section(const ParamSet& params) {
  std::string out;
  for (const auto& [name, m] : params.t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(m.rows));
    put_u32(out, static_cast<uint32_t>(m.cols));
    for (double d : m.a) {
      float f = static_cast<float>(d);
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
  }
  return out;
}

uint64_t content_digest(const std::string& stage, const std::string& plan,
                        const std::string& tensors) {
  uint64_t h = fnv1a64(stage.data(), stage.size());
  h = fnv1a64(plan.data(), plan.size(), h);
  h = fnv1a64(tensors.data(), tensors.size(), h);
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& stage, const std::string& plan) {
  const std::string tensors = tensor_section(params);
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(stage.size()));
  out.append(stage);
  put_u32(out, static_cast<uint32_t>(plan.size()));
  out.append(plan);
  put_u64(out, content_digest(stage, plan, tensors));
  put_u64(out, static_cast<uint64_t>(params.t.size()));
  out.append(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint file " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write on checkpoint file " + path);
}

ParamSet load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint file " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf, 0, path};
  if (r.str(8) != std::string(kMagic, 8))
    throw CheckpointError("bad magic in checkpoint file " + path);
  uint32_t ver = r.u32();
  if (ver != kFormatVersion)
    throw CheckpointError("unsupported format version " + std::to_string(ver) +
                          " in checkpoint file " + path);
  std::string stage = r.str(r.u32());
  std::string plan = r.str(r.u32());
  uint64_t digest = r.u64();
  uint64_t count = r.u64();
  std::string tensors = buf.substr(r.pos);
  if (content_digest(stage, plan, tensors) != digest)
    throw CheckpointError("content digest mismatch in checkpoint file " + path);

  ParamSet p;
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    uint32_t rows = r.u32();
    uint32_t cols = r.u32();
    Mat m(static_cast<int>(rows), static_cast<int>(cols));
    r.need(m.a.size() * 4);
    for (size_t j = 0; j < m.a.size(); ++j) {
      float v;
      std::memcpy(&v, buf.data() + r.pos, 4);
      r.pos += 4;
      m.a[j] = static_cast<double>(v);
    }
    if (p.t.count(name))
      throw CheckpointError("duplicate tensor " + name + " in checkpoint file " +
                            path);
    p.t.emplace(std::move(name), std::move(m));
  }
  if (r.pos != buf.size())
    throw CheckpointError("trailing bytes in checkpoint file " + path);
  if (meta) *meta = CheckpointMeta{stage, plan, digest};
  return p;
}

}  // namespace dualres
