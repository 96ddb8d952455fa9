#include "rcav/idx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "rcav/errors.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav {

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("idx: truncated at byte offset " + std::to_string(bytes_.size()) + ", needed " +
                        std::to_string(n) + " bytes from offset " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Tensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.u32();
  if (magic != kIdxImagesMagic) throw FormatError("idx images: bad magic " + hex(magic));
  const std::size_t n = r.u32(), rows = r.u32(), cols = r.u32();
  if (n == 0 || rows == 0 || cols == 0) throw FormatError("idx images: zero dimension");
  auto px = r.take(n * rows * cols);
  std::vector<float> data(px.size());
  std::transform(px.begin(), px.end(), data.begin(), [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return Tensor({n, 1, rows, cols}, std::move(data));
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.u32();
  if (magic != kIdxLabelsMagic) throw FormatError("idx labels: bad magic " + hex(magic));
  const std::size_t n = r.u32();
  auto v = r.take(n);
  return {v.begin(), v.end()};
}

std::vector<std::uint8_t> encode_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1) throw DimensionError("idx images must be [n,1,rows,cols]");
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  put_u32(out, kIdxImagesMagic);
  put_u32(out, static_cast<std::uint32_t>(images.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(images.dim(2)));
  put_u32(out, static_cast<std::uint32_t>(images.dim(3)));
  for (float v : images.data()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::size_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_u32(out, kIdxLabelsMagic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) {
    if (l > 255) throw DataError("idx labels must fit in a byte");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

Dataset ingest_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, Split split,
                   std::size_t class_count) {
  Dataset d;
  d.images = parse_idx_images(read_file_bytes(images_path));
  const auto labels = parse_idx_labels(read_file_bytes(labels_path));
  if (labels.size() != d.images.dim(0)) {
    throw FormatError("idx: " + std::to_string(labels.size()) + " labels for " + std::to_string(d.images.dim(0)) +
                      " images");
  }
  d.labels.assign(labels.begin(), labels.end());
  d.split = split;
  const std::size_t max_label = *std::max_element(labels.begin(), labels.end());
  d.class_count = class_count == 0 ? std::max<std::size_t>(2, max_label + 1) : class_count;
  for (std::size_t k = 0; k < d.class_count; ++k) d.class_names.push_back("class" + std::to_string(k));
  d.validate();
  return d;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& data) {
  write_file_bytes(images_path, encode_idx_images(data.images));
  write_file_bytes(labels_path, encode_idx_labels(data.labels));
}

}  // namespace rcav
