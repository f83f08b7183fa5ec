#include "psdf/tensor.hpp"

#include <omp.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace psdf {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int max_threads() {
  const char* det = std::getenv("PSDF_DETERMINISTIC");
  if (det && det[0] == '1') return 1;
  return omp_get_max_threads();
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_pst(const Tensor& t, PstDtype dtype) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + t.count() * (dtype == PstDtype::F32 ? 4 : 1));
  out.push_back('P');
  out.push_back('S');
  out.push_back('D');
  out.push_back('T');
  out.push_back(1);  // version
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
  if (dtype == PstDtype::F32) {
    for (double v : t.data) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  } else {
    for (double v : t.data) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

Tensor decode_pst(const std::uint8_t* p, std::size_t n) {
  if (n < 7 || p[0] != 'P' || p[1] != 'S' || p[2] != 'D' || p[3] != 'T')
    throw IoError("not a PSDT tensor");
  if (p[4] != 1) throw IoError("unsupported PSDT version");
  auto dtype = static_cast<PstDtype>(p[5]);
  if (dtype != PstDtype::F32 && dtype != PstDtype::U8)
    throw IoError("unsupported PSDT dtype");
  std::size_t rank = p[6];
  std::size_t off = 7;
  if (n < off + 4 * rank) throw IoError("truncated PSDT header");
  Tensor t;
  t.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i, off += 4) t.dims[i] = get_u32(p + off);
  std::size_t cnt = t.count();
  std::size_t esz = dtype == PstDtype::F32 ? 4 : 1;
  if (n != off + cnt * esz) throw IoError("PSDT payload size mismatch");
  t.data.resize(cnt);
  if (dtype == PstDtype::F32) {
    for (std::size_t i = 0; i < cnt; ++i, off += 4) {
      std::uint32_t bits = get_u32(p + off);
      float f;
      std::memcpy(&f, &bits, 4);
      t.data[i] = f;
    }
  } else {
    for (std::size_t i = 0; i < cnt; ++i, ++off) t.data[i] = p[off];
  }
  return t;
}

void write_pst(const std::string& path, const Tensor& t, PstDtype dtype) {
  auto bytes = encode_pst(t, dtype);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

Tensor read_pst(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot read " + path);
  auto sz = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> bytes(sz);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(sz));
  return decode_pst(bytes.data(), sz);
}

PstDtype peek_pst_dtype(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::uint8_t hdr[6];
  f.read(reinterpret_cast<char*>(hdr), 6);
  if (!f) throw IoError("cannot read " + path);
  return static_cast<PstDtype>(hdr[5]);
}

}  // namespace psdf
