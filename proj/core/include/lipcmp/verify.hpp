#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipcmp/arch.hpp"
#include "lipcmp/spectral.hpp"

namespace lipcmp {

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  bool skipped = false;
  std::string method;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::string note;

  bool operator==(const Check&) const = default;
};

struct CertReport {
  std::string subject_type;  // "layer" or "network"
  nlohmann::json subject;
  // Standard baseline: checks are recorded but never fail the report.
  bool baseline = false;
  std::vector<Check> checks;
  std::string timestamp;
  std::string tool_version;

  bool passed() const;
  std::size_t failed_count() const;
};

void to_json(nlohmann::json& j, const Check& c);
void from_json(const nlohmann::json& j, Check& c);
void to_json(nlohmann::json& j, const CertReport& r);
void from_json(const nlohmann::json& j, CertReport& r);

std::string tool_version();
std::string utc_timestamp();

// Tolerance on sigma_max(J) - 1 for the kind.
double lipschitz_tolerance(LayerKind kind);
// Max-entry tolerance on J^T J - I; nullopt for non-orthogonal kinds.
std::optional<double> orthogonality_tolerance(LayerKind kind);

struct CheckOptions {
  std::size_t power_iterations = 10000;
  std::size_t oracle_limit = kDefaultOracleLimit;
  std::uint64_t seed = 0;
  bool timestamp = true;
};

// (1/b) sum_i |a_i - mean|^2 after every layer, input first.
std::vector<double> batch_activation_variance(const Network& net, const FeatureBatch& batch);

// Largest step-to-step increase relative to the earlier value, and the
// relative slack (1e-9) it is compared against.
struct MonotonicityResult {
  double max_increase = 0.0;
  double slack = 0.0;
  bool nonincreasing = true;
};
MonotonicityResult variance_monotonicity(const std::vector<double>& trace);

// Certification checks for one materialized layer.
std::vector<Check> layer_checks(const Layer& layer, const CheckOptions& options);

CertReport check_layer(const LayerSpec& spec, const std::vector<double>& raw, std::size_t size,
                       const CheckOptions& options);

struct GridPoint {
  std::size_t channels = 0;
  std::size_t k = 1;
  std::size_t size = 0;
};

// Random draws per grid point, evaluated concurrently and merged in grid order.
CertReport check_layer_grid(const LayerSpec& base, const std::vector<GridPoint>& grid, std::size_t draws,
                            const CheckOptions& options);

CertReport check_network(const Network& net, const nlohmann::json& subject, bool baseline,
                         const FeatureBatch& batch, const CheckOptions& options);
CertReport check_network(const NetworkSpec& spec, std::uint64_t seed, const FeatureBatch& batch,
                         const CheckOptions& options);

}  // namespace lipcmp
