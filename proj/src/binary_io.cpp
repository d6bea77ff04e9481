#include "alfia/binary_io.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

namespace alfia::binary {

void Writer::seal() { put(crc32(bytes_)); }

std::string Reader::get_string() {
  const auto n = get<std::uint32_t>();
  return std::string(get_raw(n));
}

std::string_view Reader::get_raw(std::size_t n) {
  need(n);
  const auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

void Reader::need(std::size_t n) const {
  if (n > bytes_.size() - pos_)
    throw Error(context_ + ": truncated at byte " + std::to_string(pos_));
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "write failed for " + path.string());
}

std::string_view checked_payload(std::string_view file, const std::string& context) {
  require(file.size() >= sizeof(std::uint32_t), context + ": truncated file");
  const auto payload = file.substr(0, file.size() - sizeof(std::uint32_t));
  std::uint32_t stored;
  std::memcpy(&stored, file.data() + payload.size(), sizeof stored);
  require(stored == crc32(payload), context + ": checksum mismatch (corrupt or truncated file)");
  return payload;
}

}  // namespace alfia::binary
