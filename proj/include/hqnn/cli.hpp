#pragma once

// Command-line front end: generate-data, train, evaluate, noise-sweep, verify.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace hqnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerifyFailed = 2;
inline constexpr int kExitDivergence = 3;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "HQNN_OUT_DIR";

/// Runs one command. argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct VerifyOptions {
  std::string suite = "all";  // all | gates | kraus | grad | wmmse | params
  int K = 8;
  int grad_cases = 100;
  int wmmse_cases = 100;
  std::uint64_t seed = 0;
};

/// Runs the invariant suites, printing one line per check. Returns true when all pass.
bool run_verify(const VerifyOptions& opts, std::ostream& out);

}  // namespace hqnn::cli
