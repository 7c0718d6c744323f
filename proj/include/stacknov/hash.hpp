#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace stacknov {

// FNV-1a 64-bit, used for config/content hashes in stage caching.
inline std::uint64_t fnv1a(const std::string& bytes,
                           std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string hash_string(const std::string& bytes) {
  return hex64(fnv1a(bytes));
}

inline std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_string(ss.str());
}

}  // namespace stacknov
