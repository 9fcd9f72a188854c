#pragma once

// Command-line front end: argument parsing, law/config resolution, seeding
// discipline, CSV output and JSON run manifests for every experiment module.
//
// Exit status contract: 0 success, 2 configuration or usage error (nothing
// written), 3 budget exhaustion (partial results are written and flagged in
// the manifest).

#include <string>
#include <vector>

namespace brw::cli {

inline constexpr const char* kToolName = "brwlab";
inline constexpr const char* kVersion = "1.0.0";

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace brw::cli
