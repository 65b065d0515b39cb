#include "qkd/bits.hpp"

#include <stdexcept>

namespace qkd {

std::uint8_t parity(std::span<const std::uint8_t> bits) {
  std::uint8_t p = 0;
  for (auto b : bits) p ^= b;
  return p & 1U;
}

std::vector<std::uint64_t> pack_words(std::span<const std::uint8_t> bits) {
  std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] & 1U) words[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  return words;
}

std::vector<std::uint8_t> pack_msb(std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] & 1U) out[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
  }
  return out;
}

Bits unpack_msb(std::span<const std::uint8_t> bytes, std::size_t n_bits) {
  if (n_bits > bytes.size() * 8) throw std::invalid_argument("unpack_msb: not enough bytes");
  Bits out(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) {
    out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1U;
  }
  return out;
}

std::string to_string(std::span<const std::uint8_t> bits) {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

Bits from_string(const std::string& s) {
  Bits out;
  out.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1') throw std::invalid_argument("from_string: expected only 0/1");
    out.push_back(c == '1' ? 1 : 0);
  }
  return out;
}

}  // namespace qkd
