#pragma once

// Command-line front end: verify-bounds, verify-info and train.
//
// Exit codes: 0 success, 1 verification or training failure, 2 usage or
// configuration error.

#include "jcl/config.hpp"
#include "jcl/infotheory.hpp"

#include <iosfwd>
#include <vector>

namespace jcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct InfoSuiteResult {
  std::vector<info::CheckRow> rows;
  std::size_t failures = 0;
};

// Identity, data-processing and InfoNCE checks as configured.
InfoSuiteResult run_info_suite(const config::InfoConfig& cfg);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jcl::cli
