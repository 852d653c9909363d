#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "hash.hpp"

namespace ragfair::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it into place, so readers see
/// either the old file or the complete new one.
inline void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Serializes `items` one JSON object per line.
template <typename T, typename ToJson>
std::string to_jsonl(const std::vector<T>& items, ToJson&& to_json) {
  std::string out;
  for (const auto& item : items) {
    out += to_json(item).dump();
    out.push_back('\n');
  }
  return out;
}

/// Calls `fn(json, line_no)` for every non-blank line of a JSONL file.
inline void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), no);
    }
    fn(j, no);
  }
}

template <typename T, typename FromJson>
std::vector<T> read_jsonl(const fs::path& path, FromJson&& from_json) {
  std::vector<T> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(from_json(j)); });
  return out;
}

}  // namespace ragfair::io
