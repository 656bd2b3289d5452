#include "ablah/binary_io.hpp"

#include <zlib.h>

#include <iterator>
#include <sstream>

namespace ablah::io {

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void Writer::put_matrix(const Eigen::MatrixXd& m) {
  put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) put<double>(m(i, j));
  }
}

void Writer::write_to(std::ostream& out, bool with_crc) const {
  out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (with_crc) {
    const std::uint32_t c = to_little(crc32(buffer_));
    out.write(reinterpret_cast<const char*>(&c), sizeof c);
  }
  if (!out) throw std::runtime_error("write failed");
}

Reader Reader::from_stream(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(bytes));
}

std::string Reader::get_bytes(std::size_t n) {
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::string Reader::get_string() { return get_bytes(get<std::uint64_t>()); }

Eigen::MatrixXd Reader::get_matrix() {
  const auto rows = get<std::uint64_t>();
  const auto cols = get<std::uint64_t>();
  if (rows > (1u << 26) || cols > (1u << 26) || rows * cols * 8 > bytes_.size() - pos_) {
    throw DataError("binary input truncated (matrix payload)");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = get<double>();
  }
  return m;
}

void Reader::verify_crc() {
  if (bytes_.size() < 4) throw DataError("binary input truncated (no checksum)");
  const std::size_t body = bytes_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + body, 4);
  stored = to_little(stored);
  if (stored != crc32(std::string_view(bytes_).substr(0, body))) throw DataError("checksum mismatch");
  bytes_.resize(body);
}

}  // namespace ablah::io
