#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "flexgrid/errors.hpp"

namespace flexgrid::binio {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  if (!out) throw ConfigError("binary write failed");
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("binary read failed or truncated stream");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
  if (!out) throw ConfigError("binary write failed");
}

inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > (1u << 20)) throw ConfigError("binary string length implausible");
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) throw ConfigError("binary read failed or truncated stream");
  return s;
}

}  // namespace flexgrid::binio
