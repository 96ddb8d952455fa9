#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rcav/dataset.hpp"
#include "rcav/tensor.hpp"

namespace rcav {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// u8 pixels scaled by 1/255, returned as [n, 1, rows, cols].
Tensor parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

// Pixels are quantised with round(v * 255).
std::vector<std::uint8_t> encode_idx_images(const Tensor& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::size_t> labels);

// FormatError on bad magic, truncation (with the byte offset) or a label count
// that differs from the image count. class_count 0 means max label + 1.
Dataset ingest_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                   Split split = Split::train, std::size_t class_count = 0);

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& data);

}  // namespace rcav
