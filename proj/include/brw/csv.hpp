#pragma once

// Locale-independent CSV assembly.  Floating-point fields are written with
// 17 significant digits via std::to_chars, so output bytes are identical
// across runs, locales and thread counts.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

namespace brw {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter& field(std::string_view s) {
    sep();
    buf_.append(s);
    return *this;
  }

  // Without this overload a string literal would decay to const char* and
  // take the bool overload (pointer-to-bool is a standard conversion, the
  // string_view constructor is user-defined).
  CsvWriter& field(const char* s) { return field(std::string_view(s)); }

  CsvWriter& field(double v) { return field(std::string_view(format_double(v))); }

  CsvWriter& field(std::uint64_t v) { return field(std::string_view(std::to_string(v))); }

  CsvWriter& field(std::int64_t v) { return field(std::string_view(std::to_string(v))); }

  CsvWriter& field(int v) { return field(static_cast<std::int64_t>(v)); }

  CsvWriter& field(bool v) { return field(std::string_view(v ? "1" : "0")); }

  void end_row() {
    buf_.push_back('\n');
    row_open_ = false;
  }

  const std::string& str() const { return buf_; }

 private:
  void sep() {
    if (row_open_) buf_.push_back(',');
    row_open_ = true;
  }

  std::string buf_;
  bool row_open_ = false;
};

}  // namespace brw
