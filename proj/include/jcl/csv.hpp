#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace jcl::csv {

// 17 significant digits: round-trips every double. NaN prints as an empty cell.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* flag(bool b) { return b ? "1" : "0"; }

}  // namespace jcl::csv
