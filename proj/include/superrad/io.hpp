#pragma once

// CSV tables with a '#'-prefixed JSON header, written via temp-then-rename.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "superrad/errors.hpp"

namespace superrad {

/// Shortest round-trip decimal representation; "nan"/"inf" for non-finite.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_header(const nlohmann::json& j) { header_.push_back(j.dump()); }
  void add_comment(const std::string& line) { header_.push_back(line); }

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw ArgumentError("CSV row width does not match header");
    rows_.push_back(cells);
  }

  /// Column header and data rows only.
  std::string body() const {
    std::string out = join(columns_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

  std::string text() const {
    std::string out;
    for (const auto& h : header_) out += "# " + h + "\n";
    return out + body();
  }

  std::size_t row_count() const { return rows_.size(); }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line + "\n";
  }

  std::vector<std::string> columns_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Write to "<path>.tmp" and rename over path, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw ValidationError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ValidationError("rename to '" + path.string() + "' failed: " + ec.message());
}

/// Strip '#' header lines and return the remaining text.
inline std::string csv_body(const std::string& text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (text[pos] != '#') out.append(text, pos, end - pos + 1);
    pos = end + 1;
  }
  return out;
}

}  // namespace superrad
