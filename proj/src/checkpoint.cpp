#include "relchain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace relchain {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; byte swapping not implemented");

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  uint64_t len = read_pod<uint64_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, std::span<const Parameter> params,
                     const std::string& meta) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + file.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_string(out, meta);
  write_pod<uint64_t>(out, params.size());
  for (const Parameter& p : params) {
    write_string(out, p.name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.value.shape().size()));
    for (int64_t d : p.value.shape()) write_pod<int64_t>(out, d);
    const auto v = p.value.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + file.string());
  uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.meta = read_string(in);
  uint64_t count = read_pod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    Parameter p;
    p.name = read_string(in);
    uint32_t rank = read_pod<uint32_t>(in);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = read_pod<int64_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated parameter " + p.name);
    p.value = t;
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, std::vector<Parameter>& params) {
  for (const Parameter& src : ckpt.params) {
    bool found = false;
    for (Parameter& dst : params) {
      if (dst.name != src.name) continue;
      if (dst.value.shape() != src.value.shape())
        throw std::runtime_error("checkpoint: shape mismatch for '" + src.name + "': " +
                                 shape_str(src.value.shape()) + " vs " +
                                 shape_str(dst.value.shape()));
      std::copy(src.value.values().begin(), src.value.values().end(), dst.value.values().begin());
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("checkpoint: unknown parameter '" + src.name + "'");
  }
  if (ckpt.params.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
}

}  // namespace relchain
