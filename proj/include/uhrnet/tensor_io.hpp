#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "uhrnet/tensor.hpp"

namespace uhrnet {

// Raw tensor file "HRTF":
//   magic "HRTF" | u32 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//   u64 dims[rank] | payload
// All integers and payload values are little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
void write_tensor(std::ostream& out, const Tensor64& t);
void save_tensor(const std::filesystem::path& path, const Tensor& t);

// f64 files are narrowed to f32.
Tensor read_tensor(std::istream& in);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace uhrnet
