#pragma once

#include <string>
#include <vector>

#include "nvsd/kernel.hpp"

namespace nvsd {

/// Raised for unreadable or malformed input files. The message names the
/// file and, where applicable, the line.
class InputError : public Error {
 public:
  using Error::Error;
};

struct CsvTable {
  std::vector<std::string> header;
  Matrix data;  // rows x header.size()
};

/// Numeric CSV with one header row. Blank lines are skipped.
CsvTable read_csv(const std::string& path);

/// Single-column numeric CSV (header row plus one value per line).
Vector read_csv_vector(const std::string& path);

std::string read_text_file(const std::string& path);

/// Writes through a temporary file in the same directory and renames it
/// into place.
void write_file_atomic(const std::string& path, const std::string& content);

/// 17 significant digits, locale independent; parses back to the same double.
std::string format_double(double value);

std::string csv_text(const std::vector<std::string>& header, const MatrixRef& data);

}  // namespace nvsd
