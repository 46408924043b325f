#pragma once

// Portable tensor container for model weights.
//
// Layout, all integers little-endian:
//   char[4]  magic "XBVT"
//   u32      version (1)
//   u32      record count
//   per record:
//     u32      name length in bytes, then the UTF-8 name (no terminator)
//     u32      rank, then rank x u64 dimensions
//     f32      prod(dims) IEEE-754 values, row-major, little-endian

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xbarvit/vit.hpp"

namespace xbarvit {

inline constexpr char kTensorMagic[4] = {'X', 'B', 'V', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> decode_tensors(const std::vector<std::uint8_t>& bytes);

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path);

// Records named "encoder.<i>.<w_q|w_k|w_v|w_proj|mlp_1|mlp_2|ln1_gain|ln1_bias|ln2_gain|ln2_bias>".
std::vector<TensorRecord> model_to_records(const Model& model);
// Encoder count, width and MLP ratio come from the tensors; tokens and heads
// from `shape`, which is validated against them.
Model model_from_records(const std::vector<TensorRecord>& records, const ModelConfig& shape);

}  // namespace xbarvit
