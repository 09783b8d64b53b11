#pragma once

// Minimal CSV writer for report tables. Comment lines ("# ...") may precede
// the header to carry reference values.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

namespace metaoth {

using Cell = std::variant<std::string, double, long long>;

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void comment(const std::string& line);
  void header(std::initializer_list<std::string> columns);
  void row(const std::vector<Cell>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

// Shortest round-trip decimal form; nan, inf and -inf spelled out.
std::string format_number(double v);

}  // namespace metaoth
