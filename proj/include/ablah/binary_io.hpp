#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "ablah/error.hpp"

namespace ablah::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

std::uint32_t crc32(std::string_view bytes);

// Accumulates bytes in memory so a checksum can be appended.
class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    buffer_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(std::string_view s) { buffer_.append(s); }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    buffer_.append(s);
  }
  void put_matrix(const Eigen::MatrixXd& m);

  [[nodiscard]] const std::string& bytes() const { return buffer_; }
  void write_to(std::ostream& out, bool with_crc) const;

 private:
  std::string buffer_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  static Reader from_stream(std::istream& in);

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string get_bytes(std::size_t n);
  std::string get_string();
  Eigen::MatrixXd get_matrix();

  // Verifies and strips a trailing crc32 over everything before it.
  void verify_crc();
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("binary input truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ablah::io
