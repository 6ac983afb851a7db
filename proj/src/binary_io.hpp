#pragma once

// Little-endian primitives shared by the tensor and weight file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "uhrnet/error.hpp"

namespace uhrnet::detail {

static_assert(std::endian::native == std::endian::little,
              "file formats are written with native little-endian stores");

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    U v;
    copy_out(&v, sizeof(U));
    return v;
  }
  void get_bytes(void* out, std::size_t n) { copy_out(out, n); }
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void copy_out(void* out, std::size_t n) {
    if (n > remaining()) {
      throw Error(ErrorCode::FormatError,
                  "unexpected end of data at offset " + std::to_string(pos_), pos_);
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> read_all(std::istream& in);

}  // namespace uhrnet::detail
