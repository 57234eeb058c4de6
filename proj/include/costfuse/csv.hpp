#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace costfuse::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "".
std::vector<std::string> split(std::string_view line);

/// Quotes a field when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Shortest decimal that parses back to the same double. nan/inf spelled out.
std::string format_double(double v);

/// Strict parse; throws ValidationError naming `what` on failure. An empty
/// field parses as NaN.
double parse_double(std::string_view field, std::string_view what);

/// Line-oriented reader that keeps the 1-based line number for diagnostics.
/// Blank lines are skipped; CR line endings are tolerated.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  bool next(std::vector<std::string>& fields);
  std::size_t line() const noexcept { return line_; }
  const std::string& source() const noexcept { return source_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::ifstream in_;
  std::string source_;
  std::size_t line_ = 0;
};

/// Opens `path` for writing, creating parent directories.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace costfuse::csv
