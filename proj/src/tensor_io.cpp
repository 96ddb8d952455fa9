#include "rcav/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "rcav/errors.hpp"

namespace rcav {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw DimensionError("RCVT supports rank <= 255");
  std::vector<std::uint8_t> out{'R', 'C', 'V', 'T', kRcvtVersion, static_cast<std::uint8_t>(t.rank())};
  out.reserve(6 + 4 * t.rank() + 4 * t.size());
  for (auto d : t.shape()) {
    if (d > 0xffffffffu) throw DimensionError("RCVT dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || bytes[0] != 'R' || bytes[1] != 'C' || bytes[2] != 'V' || bytes[3] != 'T') {
    throw FormatError("RCVT: bad magic");
  }
  if (bytes[4] != kRcvtVersion) throw FormatError("RCVT: unsupported version " + std::to_string(bytes[4]));
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("RCVT: rank 0");
  if (bytes.size() < 6 + 4 * rank) throw FormatError("RCVT: truncated header at byte offset " + std::to_string(bytes.size()));
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = get_u32(bytes, 6 + 4 * i);
  const std::size_t n = shape_size(shape);
  const std::size_t payload = 6 + 4 * rank;
  if (bytes.size() != payload + 4 * n) {
    throw FormatError("RCVT: payload size mismatch, expected " + std::to_string(payload + 4 * n) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(bytes, payload + 4 * i));
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_file_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

}  // namespace rcav
