#include "nvsd/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace nvsd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  CsvTable table;
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view);
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw InputError(where(path, line_no) + "expected " + std::to_string(table.header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size())
        throw InputError(where(path, line_no) + "field " + std::to_string(c + 1) +
                         " is not a number: '" + std::string(f) + "'");
      if (!std::isfinite(v))
        throw InputError(where(path, line_no) + "field " + std::to_string(c + 1) +
                         " is not finite");
      values.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  table.data.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      table.data(static_cast<Eigen::Index>(r), c) =
          values[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  return table;
}

Vector read_csv_vector(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.data.cols() != 1)
    throw InputError(path + ": expected a single column, found " +
                     std::to_string(t.header.size()));
  return t.data.col(0);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw Error(path + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw Error(path + ": rename failed: " + ec.message());
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string csv_text(const std::vector<std::string>& header, const MatrixRef& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.cols())
    throw Error("csv_text: header and column count differ");
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      if (c) out += ',';
      out += format_double(data(r, c));
    }
    out += '\n';
  }
  return out;
}

}  // namespace nvsd
