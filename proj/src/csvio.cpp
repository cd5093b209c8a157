#include "exosim/csvio.hpp"

#include <fstream>
#include <sstream>

#include "exosim/util.hpp"

namespace exosim::io {

std::size_t Csv::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw SchemaError("missing CSV column '" + name + "'");
}

double Csv::num(std::size_t row, std::size_t column) const {
  double v = 0.0;
  const std::string& cell = rows.at(row).at(column);
  if (!parse_double(cell, v)) {
    throw SchemaError("non-numeric CSV cell '" + cell + "' in column '" +
                      columns.at(column) + "'");
  }
  return v;
}

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open CSV file: " + path);
  Csv csv;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (csv.tag.empty()) csv.tag = std::string(trim(line.substr(1)));
      continue;
    }
    auto cells = split(line, ',');
    for (auto& c : cells) c = std::string(trim(c));
    if (!have_header) {
      csv.columns = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != csv.columns.size()) {
        throw SchemaError("CSV row with " + std::to_string(cells.size()) +
                          " cells, expected " +
                          std::to_string(csv.columns.size()) + " in " + path);
      }
      csv.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw SchemaError("CSV file has no header: " + path);
  return csv;
}

Csv read_csv(const std::string& path, const std::string& expected_tag,
             const std::vector<std::string>& expected_columns) {
  Csv csv = read_csv(path);
  if (csv.tag != expected_tag) {
    throw SchemaError("CSV version tag mismatch in " + path + ": got '" +
                      csv.tag + "', expected '" + expected_tag + "'");
  }
  for (const auto& c : expected_columns) csv.col(c);
  if (csv.columns.size() != expected_columns.size()) {
    throw SchemaError("CSV column count mismatch in " + path);
  }
  return csv;
}

void write_csv(const std::string& path, const std::string& tag,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  for (const auto& r : rows) {
    if (r.size() != columns.size()) {
      throw SchemaError("refusing to write ragged CSV: " + path);
    }
  }
  std::ostringstream out;
  out << "# " << tag << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << r[i] << (i + 1 < r.size() ? "," : "\n");
    }
  }
  write_text_file(path, out.str());
}

std::uint64_t file_checksum(const std::string& path) {
  const std::string data = read_text_file(path);
  return fnv1a64(data.data(), data.size());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << content;
  if (!out) throw SchemaError("write failed: " + path);
}

}  // namespace exosim::io
