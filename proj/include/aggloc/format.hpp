#pragma once

#include <charconv>
#include <string>

namespace aggloc {

// Shortest round-trip decimal representation; keeps emitted CSV/JSON
// deterministic byte-for-byte.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace aggloc
