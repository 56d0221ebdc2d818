#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lipcmp::cli {

enum class Subcommand { VerifyLayer, VerifyNetwork, Cost, CertAcc, Report };

struct RunConfig {
  Subcommand subcommand = Subcommand::VerifyLayer;
  std::string spec_path;    // layer or network JSON; report JSON for `report`
  std::string params_path;  // optional LT1 raw parameters
  std::string data_path;    // optional dataset directory
  std::string output_path;  // empty writes to stdout
  std::uint64_t seed = 0;
  std::vector<double> epsilons{36.0 / 255.0, 72.0 / 255.0, 108.0 / 255.0, 1.0};
  std::size_t oracle_limit = 4096;
  std::size_t power_iterations = 10000;
  std::size_t size = 8;
  std::size_t batch = 8;
  std::size_t samples = 200;
  bool timestamp = true;

  // cost
  std::string kind;
  std::string phase = "both";
  std::size_t b = 1, s = 8, c = 4, k = 3, t = 10, t1 = 5, t2 = 100;
};

inline constexpr int kExitPass = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitCheckFailed = 2;

// Parses argv; on usage errors or --help writes to `err`/`out` and returns the
// exit code instead of a config.
struct ParseResult {
  std::optional<RunConfig> config;
  int exit_code = kExitPass;
};
ParseResult parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int run(const RunConfig& config, std::ostream& out, std::ostream& err);

// parse_args followed by run.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lipcmp::cli
