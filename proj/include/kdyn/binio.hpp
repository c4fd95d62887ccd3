#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"

namespace kdyn::detail {

inline std::uint32_t crc32_update(std::uint32_t crc, const void* data,
                                  std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return crc;
}

// Little-endian writer that folds everything it emits into a running CRC32.
class ByteSink {
 public:
  explicit ByteSink(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), std::streamsize(n));
    if (!os_)
      throw DataError("write failed at byte " + std::to_string(off_));
    crc_ = crc32_update(crc_, p, n);
    off_ += n;
  }

  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void f64_array(const double* p, std::size_t n) {
    buf_.resize(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = std::bit_cast<std::uint64_t>(p[i]);
      for (int b = 0; b < 8; ++b)
        buf_[i * 8 + b] = (unsigned char)(u >> (8 * b));
    }
    bytes(buf_.data(), buf_.size());
  }

  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }

  std::uint32_t crc() const { return crc_ ^ 0xFFFFFFFFu; }
  std::uint64_t offset() const { return off_; }

 private:
  template <class T>
  void le(T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      b[i] = (unsigned char)(v >> (8 * i));
    bytes(b, sizeof b);
  }

  std::ostream& os_;
  std::uint64_t off_ = 0;
  std::uint32_t crc_ = 0xFFFFFFFFu;
  std::vector<unsigned char> buf_;
};

// Matching reader; errors carry the byte offset where trouble started.
class ByteSource {
 public:
  explicit ByteSource(std::istream& is) : is_(is) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(is_.gcount()) != n)
      throw DataError("file truncated at byte " +
                      std::to_string(off_ + std::size_t(is_.gcount())));
    crc_ = crc32_update(crc_, p, n);
    off_ += n;
  }

  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  void f64_array(double* p, std::size_t n) {
    buf_.resize(n * 8);
    bytes(buf_.data(), buf_.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b)
        u |= std::uint64_t(buf_[i * 8 + b]) << (8 * b);
      p[i] = std::bit_cast<double>(u);
    }
  }

  std::string str(std::size_t max_len, const char* what) {
    const std::uint32_t n = u32();
    if (n > max_len)
      throw DataError(std::string("implausible ") + what + " length " +
                      std::to_string(n) + " at byte " +
                      std::to_string(off_ - 4));
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }

  // trailer checksum: read raw, without folding it into the running CRC
  std::uint32_t trailer_u32() {
    unsigned char b[4];
    is_.read(reinterpret_cast<char*>(b), 4);
    if (is_.gcount() != 4)
      throw DataError("file truncated at byte " +
                      std::to_string(off_ + std::size_t(is_.gcount())));
    off_ += 4;
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  void expect_eof() {
    is_.peek();
    if (!is_.eof())
      throw DataError("trailing bytes after byte " + std::to_string(off_));
  }

  std::uint32_t crc() const { return crc_ ^ 0xFFFFFFFFu; }
  std::uint64_t offset() const { return off_; }

 private:
  template <class T>
  T le() {
    unsigned char b[sizeof(T)];
    bytes(b, sizeof b);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= T(b[i]) << (8 * i);
    return v;
  }

  std::istream& is_;
  std::uint64_t off_ = 0;
  std::uint32_t crc_ = 0xFFFFFFFFu;
  std::vector<unsigned char> buf_;
};

}  // namespace kdyn::detail
