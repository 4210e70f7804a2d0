#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddmnet/tensor.hpp"

namespace ddmnet {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary layout (little-endian):
//   "DDMN" | u32 version | { u32 name_len | name | u32 rank | u64 extent* | f64 value* }*
inline constexpr char kCheckpointMagic[4] = {'D', 'D', 'M', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const std::vector<NamedTensor>& records);
// `source` names the input in error messages.
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes, const std::string& source);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace ddmnet
