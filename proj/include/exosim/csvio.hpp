#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exosim/errors.hpp"

namespace exosim::io {

/// CSV table with a schema version tag carried in a leading "# tag" comment
/// line. All writers emit the tag; readers expose it for validation.
struct Csv {
  std::string tag;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws SchemaError naming the missing column.
  std::size_t col(const std::string& name) const;

  double num(std::size_t row, std::size_t column) const;
};

Csv read_csv(const std::string& path);

/// Reads and checks the version tag and the exact column set (order
/// included).
Csv read_csv(const std::string& path, const std::string& expected_tag,
             const std::vector<std::string>& expected_columns);

void write_csv(const std::string& path, const std::string& tag,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);

std::uint64_t file_checksum(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace exosim::io
