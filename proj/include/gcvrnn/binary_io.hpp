#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gcvrnn/tensor.hpp"

namespace gcvrnn {

/// Raised for malformed files; carries the byte offset or line number.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace io {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void f64s(const std::vector<double>& v) {
    for (double d : v) f64(d);
  }
  void bytes(const std::string& s) { buf_.append(s); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& buffer() const { return buf_; }

 private:
  template <class T>
  void raw(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t pos, std::string what) : data_(data), pos_(pos), what_(std::move(what)) {}

  std::size_t position() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(to_little(raw<std::uint64_t>())); }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  std::string str(std::size_t max_len = 1u << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) fail("string length " + std::to_string(n) + " exceeds limit");
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(what_ + ": " + msg + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      fail("truncated payload (need " + std::to_string(n) + " bytes, have " + std::to_string(data_.size() - pos_) + ")");
    }
  }
  template <class T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  const std::string& data_;
  std::size_t pos_;
  std::string what_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path);
}

/// Splits "key=value" header lines up to a terminator line. Returns the byte
/// offset just past the terminator.
inline std::size_t read_header_lines(const std::string& data, const std::string& terminator,
                                     std::vector<std::pair<std::string, std::string>>& out, const std::string& what,
                                     std::size_t start = 0) {
  std::size_t pos = start;
  std::size_t line_no = 0;
  while (true) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      throw ParseError(what + ": header not terminated (missing '" + terminator + "') after line " + std::to_string(line_no));
    }
    ++line_no;
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == terminator) return pos;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(what + ": malformed header line " + std::to_string(line_no) + ": '" + line + "'");
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
}

}  // namespace io
}  // namespace gcvrnn
