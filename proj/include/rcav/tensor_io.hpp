#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcav/tensor.hpp"

namespace rcav {

// RCVT on-disk layout:
//   bytes 0..3   "RCVT"
//   byte  4      version (1)
//   byte  5      rank
//   4*rank bytes dims, u32 little-endian
//   payload      f32 little-endian, row-major
inline constexpr std::uint8_t kRcvtVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace rcav
