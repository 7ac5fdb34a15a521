#pragma once

// Little-endian primitives shared by the binary containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "perimotion/errors.hpp"

namespace perimotion::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r = static_cast<U>((r << 8) | ((v >> (8 * i)) & 0xFF));
    return r;
  } else {
    return v;
  }
}

template <typename U>
void put(std::ostream& out, U v) {
  const U le = to_little(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof(U));
}

inline void put_f32(std::ostream& out, float v) { put(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

// Sequential reader that tracks the byte offset for error messages.
class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw TruncatedError(what_ + ": truncated at byte offset " + std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())) +
                           ", needed " + std::to_string(n) + " more byte(s)");
    }
    offset_ += n;
  }

  template <typename U>
  U get() {
    U v;
    bytes(reinterpret_cast<char*>(&v), sizeof(U));
    return to_little(v);
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  // Reads the magic and reports the first mismatching byte.
  void expect_magic(const char* magic, std::size_t n) {
    std::string got(n, '\0');
    in_.read(got.data(), static_cast<std::streamsize>(n));
    const auto read = static_cast<std::size_t>(in_.gcount());
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= read || got[i] != magic[i]) {
        throw FormatError(offset_ + i, what_ + ": bad magic, expected \"" + std::string(magic, n) + "\"");
      }
    }
    offset_ += n;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw ValidationError(what_ + ": unexpected trailing data at byte offset " + std::to_string(offset_));
    }
  }

  std::size_t offset() const noexcept { return offset_; }
  const std::string& what() const noexcept { return what_; }

 private:
  std::istream& in_;
  std::string what_;
  std::size_t offset_ = 0;
};

}  // namespace perimotion::binary
