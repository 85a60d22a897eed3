// kv.hpp -- flat key=value text files: one pair per line, '#' comments.
#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "selfpu/errors.hpp"

namespace selfpu {

using KvMap = std::map<std::string, std::string>;

inline std::string kv_trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline KvMap parse_kv_text(std::istream& in, const std::string& origin) {
  KvMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = kv_trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(origin + ":" + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = kv_trim(line.substr(0, eq));
    std::string value = kv_trim(line.substr(eq + 1));
    if (key.empty())
      throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw FormatError(origin + ":" + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

inline KvMap load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_kv_text(in, path);
}

inline void save_kv_file(const std::string& path,
                         const std::vector<std::pair<std::string, std::string>>&
                             ordered_pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : ordered_pairs) out << k << "=" << v << "\n";
  if (!out) throw IoError("write failed for " + path);
}

inline std::string kv_format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace selfpu
