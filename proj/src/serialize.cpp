#include "t2g/serialize.hpp"

#include <cstring>

#include "t2g/errors.hpp"

namespace t2g {

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n)
    throw ValidationError("byte stream truncated");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
  return v;
}

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

void ByteReader::raw(void* p, std::size_t n) {
  need(n);
  std::memcpy(p, data_.data() + pos_, n);
  pos_ += n;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace t2g
