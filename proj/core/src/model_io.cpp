#include "nef/model_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <string>

namespace nef {

static_assert(std::endian::native == std::endian::little,
              "model codec assumes a little-endian host");

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& in, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw DataError(std::string("model: truncated while reading ") + what);
  return v;
}

}  // namespace

void save_model(const EigenModel<float>& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("model: cannot open " + path.string() + " for writing");
  out.write("NEFM", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(m.n_blocks));
  put_u32(out, static_cast<std::uint32_t>(m.d));
  put_u32(out, static_cast<std::uint32_t>(m.k));
  put_u32(out, static_cast<std::uint32_t>(m.c));
  for (const Tensor<float>* p : m.parameters())
    out.write(reinterpret_cast<const char*>(p->data.data()),
              static_cast<std::streamsize>(p->data.size() * 4));
  if (!out) throw DataError("model: write failed for " + path.string());
}

EigenModel<float> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("model: cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "NEFM")
    throw DataError("model: bad magic in " + path.string() + ", expected NEFM");
  std::uint32_t version = get_u32(in, "version");
  if (version != 1)
    throw DataError("model: unsupported format version " + std::to_string(version));
  auto n_blocks = static_cast<std::int64_t>(get_u32(in, "n_blocks"));
  auto d = static_cast<std::int64_t>(get_u32(in, "width"));
  auto k = static_cast<std::int64_t>(get_u32(in, "K"));
  auto c = static_cast<std::int64_t>(get_u32(in, "channels"));
  if (d < 1 || k < 1 || c < 1 || d < k)
    throw DataError("model: invalid architecture n_blocks=" + std::to_string(n_blocks) +
                    " d=" + std::to_string(d) + " K=" + std::to_string(k) + " c=" +
                    std::to_string(c));

  EigenModel<float> m;
  m.n_blocks = n_blocks;
  m.d = d;
  m.k = k;
  m.c = c;
  m.w_in = Tensor<float>(c, d);
  m.blocks.resize(static_cast<std::size_t>(n_blocks));
  for (auto& b : m.blocks) {
    b.norm1 = Tensor<float>(1, d);
    b.wq = Tensor<float>(d, d);
    b.wk = Tensor<float>(d, d);
    b.wv = Tensor<float>(d, d);
    b.wo = Tensor<float>(d, d);
    b.norm2 = Tensor<float>(1, d);
    b.w1 = Tensor<float>(d, 4 * d);
    b.w2 = Tensor<float>(4 * d, d);
  }
  m.w_head = Tensor<float>(d, k);

  std::int64_t expected = 0;
  for (Tensor<float>* p : m.parameters()) expected += p->size();
  for (Tensor<float>* p : m.parameters()) {
    in.read(reinterpret_cast<char*>(p->data.data()),
            static_cast<std::streamsize>(p->data.size() * 4));
    if (!in)
      throw DataError("model: truncated payload in " + path.string() + ", header needs " +
                      std::to_string(expected * 4) + " parameter bytes");
    for (float x : p->data)
      if (!std::isfinite(x)) throw DataError("model: non-finite parameter in " + path.string());
  }
  char extra = 0;
  in.read(&extra, 1);
  if (!in.eof())
    throw DataError("model: trailing bytes after " + std::to_string(expected * 4) +
                    " parameter bytes in " + path.string());
  return m;
}

}  // namespace nef
