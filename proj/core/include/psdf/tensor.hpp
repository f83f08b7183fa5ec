#pragma once

#include "psdf/common.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace psdf {

// Dense row-major N-d tensor of doubles. On disk it is the `.pst` format:
// magic "PSDT", u8 version=1, u8 dtype (1 = f32 LE, 2 = u8), u8 rank,
// rank u32 LE dims, row-major payload.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> d) : dims(std::move(d)) {
    data.assign(count(), 0.0);
  }

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::size_t rank() const { return dims.size(); }

  double& at2(std::size_t i, std::size_t j) { return data[i * dims[1] + j]; }
  double at2(std::size_t i, std::size_t j) const {
    return data[i * dims[1] + j];
  }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
};

enum class PstDtype : std::uint8_t { F32 = 1, U8 = 2 };

void write_pst(const std::string& path, const Tensor& t,
               PstDtype dtype = PstDtype::F32);
Tensor read_pst(const std::string& path);
PstDtype peek_pst_dtype(const std::string& path);

// In-memory encode/decode of the same byte layout (used by checkpoints).
std::vector<std::uint8_t> encode_pst(const Tensor& t, PstDtype dtype);
Tensor decode_pst(const std::uint8_t* bytes, std::size_t n);

}  // namespace psdf
