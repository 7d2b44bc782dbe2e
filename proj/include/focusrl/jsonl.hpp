#pragma once

// Line-delimited record files. Every file written here starts with a header
// line {"header": {"schema": ..., "version": ...}}; readers skip header lines
// wherever they appear, so appended runs stay readable.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace focusrl::jsonl {

/// Insertion-ordered so unknown fields round-trip in their original order.
using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LineError {
  std::size_t line = 0;  ///< 1-based
  std::string message;
};

struct ReadResult {
  std::optional<Json> header;  ///< first header seen
  std::vector<Json> records;
  std::vector<std::size_t> lines;  ///< source line of each record
  std::vector<LineError> errors;   ///< unparseable or non-object lines
};

/// Compact single-line dump; invalid UTF-8 is replaced rather than thrown.
std::string dump_line(const Json& j);

Json make_header(std::string_view schema, const Json& extra = Json::object());
bool is_header(const Json& j);

/// Blank lines are ignored. Throws IoError when the file cannot be opened.
ReadResult read_file(const std::filesystem::path& path);
ReadResult read_stream(std::istream& in);

/// Values of `key` over all records of an existing file; empty when the file
/// does not exist. Unparseable lines (a torn last write) are ignored.
std::set<std::string> existing_ids(const std::filesystem::path& path,
                                   std::string_view key = "id");

/// Thread-safe append-only writer. A new or empty file gets `header` first.
class Appender {
 public:
  Appender(const std::filesystem::path& path, const Json& header);

  void append(const Json& record);
  std::size_t written() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::size_t written_ = 0;
};

/// Truncating writer for whole-file outputs.
void write_file(const std::filesystem::path& path, const Json& header,
                const std::vector<Json>& records);

}  // namespace focusrl::jsonl
