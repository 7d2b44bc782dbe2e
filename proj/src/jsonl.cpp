#include "focusrl/jsonl.hpp"

#include <istream>

namespace focusrl::jsonl {

std::string dump_line(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

Json make_header(std::string_view schema, const Json& extra) {
  Json h = Json::object();
  h["schema"] = std::string(schema);
  h["version"] = kSchemaVersion;
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) h[k] = v;
  }
  return Json{{"header", h}};
}

bool is_header(const Json& j) {
  return j.is_object() && j.size() == 1 && j.contains("header") &&
         j["header"].is_object();
}

ReadResult read_stream(std::istream& in) {
  ReadResult r;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      r.errors.push_back({n, "invalid JSON"});
      continue;
    }
    if (!j.is_object()) {
      r.errors.push_back({n, "record is not an object"});
      continue;
    }
    if (is_header(j)) {
      if (!r.header) r.header = std::move(j);
      continue;
    }
    r.records.push_back(std::move(j));
    r.lines.push_back(n);
  }
  return r;
}

ReadResult read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_stream(in);
}

std::set<std::string> existing_ids(const std::filesystem::path& path,
                                   std::string_view key) {
  std::set<std::string> ids;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return ids;
  const auto r = read_file(path);
  const std::string k(key);
  for (const auto& rec : r.records) {
    const auto it = rec.find(k);
    if (it != rec.end() && it->is_string()) ids.insert(it->get<std::string>());
  }
  return ids;
}

Appender::Appender(const std::filesystem::path& path, const Json& header)
    : path_(path) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) ||
                     std::filesystem::file_size(path, ec) == 0;
  bool needs_newline = false;
  if (!fresh) {
    // Repair a torn last line so the next record starts on its own line.
    std::ifstream in(path, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char c = '\n';
    if (in.get(c)) needs_newline = c != '\n';
  }
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw IoError("cannot open " + path.string() + " for append");
  if (needs_newline) out_ << '\n';
  if (fresh) out_ << dump_line(header) << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed: " + path.string());
}

void Appender::append(const Json& record) {
  const std::string line = dump_line(record);
  std::lock_guard lock(mu_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  ++written_;
}

std::size_t Appender::written() const {
  std::lock_guard lock(mu_);
  return written_;
}

void write_file(const std::filesystem::path& path, const Json& header,
                const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << dump_line(header) << '\n';
  for (const auto& r : records) out << dump_line(r) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace focusrl::jsonl
