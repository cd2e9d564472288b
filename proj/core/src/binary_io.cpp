#include "sdefim/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sdefim/error.hpp"

namespace sdefim {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void BinaryWriter::u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
void BinaryWriter::u32(std::uint32_t v) { put_le(buffer_, v); }
void BinaryWriter::u64(std::uint64_t v) { put_le(buffer_, v); }
void BinaryWriter::f64(double v) { put_le(buffer_, v); }

void BinaryWriter::string(std::string_view s) {
  u64(s.size());
  buffer_.append(s);
}

void BinaryWriter::raw(std::string_view bytes) { buffer_.append(bytes); }

void BinaryReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw FormatError("unexpected end of binary data");
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
  need(4);
  const auto v = get_le<std::uint32_t>(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  const auto v = get_le<std::uint64_t>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  need(8);
  const auto v = get_le<double>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

std::string BinaryReader::string() {
  const auto n = u64();
  return std::string(raw(n));
}

std::string_view BinaryReader::raw(std::size_t n) {
  need(n);
  auto v = bytes_.substr(pos_, n);
  pos_ += n;
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace sdefim
