#include "lipcmp/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <future>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lipcmp/random.hpp"

#ifndef LIPCMP_VERSION
#define LIPCMP_VERSION "0.0.0"
#endif

namespace lipcmp {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Check make_check(std::string name, double value, double threshold, std::string method, std::size_t iterations,
                 std::uint64_t seed) {
  Check c;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.passed = value <= threshold;
  c.method = std::move(method);
  c.iterations = iterations;
  c.seed = seed;
  return c;
}

Check skipped_check(std::string name, std::string note, std::uint64_t seed) {
  Check c;
  c.name = std::move(name);
  c.skipped = true;
  c.passed = true;
  c.method = "exact_svd";
  c.seed = seed;
  c.note = std::move(note);
  return c;
}

void stamp(CertReport& r, const CheckOptions& o) {
  r.tool_version = tool_version();
  r.timestamp = o.timestamp ? utc_timestamp() : "";
}

}  // namespace

bool CertReport::passed() const { return baseline || failed_count() == 0; }

std::size_t CertReport::failed_count() const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.skipped && !c.passed; }));
}

void to_json(nlohmann::json& j, const Check& c) {
  j = nlohmann::json{{"name", c.name},       {"value", c.value},           {"threshold", c.threshold},
                     {"passed", c.passed},   {"skipped", c.skipped},       {"method", c.method},
                     {"iterations", c.iterations}, {"seed", c.seed},        {"note", c.note}};
}

void from_json(const nlohmann::json& j, Check& c) {
  c.name = j.at("name").get<std::string>();
  c.value = j.at("value").get<double>();
  c.threshold = j.at("threshold").get<double>();
  c.passed = j.at("passed").get<bool>();
  c.skipped = j.value("skipped", false);
  c.method = j.value("method", std::string());
  c.iterations = j.value("iterations", std::size_t{0});
  c.seed = j.value("seed", std::uint64_t{0});
  c.note = j.value("note", std::string());
}

void to_json(nlohmann::json& j, const CertReport& r) {
  j = nlohmann::json{{"subject_type", r.subject_type}, {"subject", r.subject},   {"baseline", r.baseline},
                     {"checks", r.checks},             {"passed", r.passed()},   {"timestamp", r.timestamp},
                     {"tool_version", r.tool_version}};
}

void from_json(const nlohmann::json& j, CertReport& r) {
  r.subject_type = j.at("subject_type").get<std::string>();
  r.subject = j.at("subject");
  r.baseline = j.value("baseline", false);
  r.checks = j.at("checks").get<std::vector<Check>>();
  r.timestamp = j.value("timestamp", std::string());
  r.tool_version = j.value("tool_version", std::string());
}

std::string tool_version() { return LIPCMP_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

double lipschitz_tolerance(LayerKind kind) {
  switch (kind) {
    case LayerKind::SOC:
    case LayerKind::CPL:
    case LayerKind::SLL:
      return 1e-3;
    default:
      return 1e-6;
  }
}

std::optional<double> orthogonality_tolerance(LayerKind kind) {
  switch (kind) {
    case LayerKind::BCOP:
    case LayerKind::Cayley:
    case LayerKind::LOT:
      return 1e-4;
    case LayerKind::SOC:
      return 1e-2;
    default:
      return std::nullopt;
  }
}

std::vector<double> batch_activation_variance(const Network& net, const FeatureBatch& batch) {
  if (batch.batch() < 2) throw ConfigError("batch_activation_variance: batch size must be at least 2");
  auto variance = [](const FeatureBatch& a) {
    const std::size_t b = a.batch(), m = a.sample_size();
    std::vector<double> mean(m, 0.0);
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < m; ++i) mean[i] += a.data()[n * m + i];
    for (auto& v : mean) v /= static_cast<double>(b);
    double total = 0.0;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < m; ++i) {
        const double d = a.data()[n * m + i] - mean[i];
        total += d * d;
      }
    return total / static_cast<double>(b);
  };
  std::vector<double> trace{variance(batch)};
  FeatureBatch a = batch;
  for (const auto& layer : net) {
    a = layer->forward(a);
    trace.push_back(variance(a));
  }
  return trace;
}

MonotonicityResult variance_monotonicity(const std::vector<double>& trace) {
  MonotonicityResult r;
  r.slack = 1e-9;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double up = trace[i] - trace[i - 1];
    if (up <= 0.0) continue;
    const double rel = trace[i - 1] > 0.0 ? up / trace[i - 1] : std::numeric_limits<double>::infinity();
    r.max_increase = std::max(r.max_increase, rel);
  }
  r.nonincreasing = r.max_increase <= r.slack;
  return r;
}

std::vector<Check> layer_checks(const Layer& layer, const CheckOptions& o) {
  const LayerKind kind = layer.spec().kind;
  const Shape3 in = layer.input_shape(), out = layer.output_shape();
  std::vector<Check> checks;
  if (std::max(in.size(), out.size()) > o.oracle_limit) {
    const std::string note = "dense oracle limit " + std::to_string(o.oracle_limit) + " exceeded";
    checks.push_back(skipped_check("sigma_max", note, o.seed));
    if (orthogonality_tolerance(kind)) checks.push_back(skipped_check("orthogonality", note, o.seed));
    return checks;
  }
  const RealMatrix jac = jacobian_dense(layer, nullptr, o.seed);
  const double exact = exact_spectral_norm(jac);
  checks.push_back(make_check("sigma_max", exact, 1.0 + lipschitz_tolerance(kind), "exact_svd", 0, o.seed));
  if (const auto tol = orthogonality_tolerance(kind); tol && in.size() == out.size())
    checks.push_back(make_check("orthogonality", orthogonality_residual(jac), *tol, "exact_jacobian", 0, o.seed));
  if (kind == LayerKind::AOL) checks.push_back(make_check("aol_bound", exact, 1.0 + 1e-9, "exact_svd", 0, o.seed));

  const BoundResult bound = layer.lipschitz_bound(o.power_iterations, o.seed);
  if (layer.is_linear()) {
    const double rel = exact > 0.0 ? std::abs(bound.value - exact) / exact : std::abs(bound.value);
    checks.push_back(make_check("power_vs_exact", rel, 1e-3, to_string(bound.method), bound.iterations, o.seed));
  } else {
    // The local Jacobian norm must not exceed the layer's global bound.
    const double excess = bound.value > 0.0 ? exact / bound.value - 1.0 : exact;
    checks.push_back(make_check("bound_soundness", excess, lipschitz_tolerance(kind), to_string(bound.method),
                                bound.iterations, o.seed));
  }
  return checks;
}

CertReport check_layer(const LayerSpec& spec, const std::vector<double>& raw, std::size_t size,
                       const CheckOptions& o) {
  CertReport r;
  r.subject_type = "layer";
  r.subject = spec;
  r.subject["size"] = size;
  r.baseline = spec.kind == LayerKind::Standard;
  BuildOptions bo;
  bo.height = bo.width = size;
  bo.phase = Phase::Eval;
  const MaterializedLayer layer = build(spec, raw, bo);
  r.checks = layer_checks(*layer, o);
  stamp(r, o);
  return r;
}

CertReport check_layer_grid(const LayerSpec& base, const std::vector<GridPoint>& grid, std::size_t draws,
                            const CheckOptions& o) {
  std::vector<std::future<std::vector<Check>>> jobs;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    jobs.push_back(std::async(std::launch::async, [&base, &o, draws, g, p = grid[g]] {
      std::vector<Check> merged;
      for (std::size_t d = 0; d < draws; ++d) {
        LayerSpec spec = base;
        spec.c_in = spec.c_out = p.channels;
        spec.k = p.k;
        spec.seed = mix(mix(o.seed, g), d);
        CheckOptions co = o;
        co.seed = spec.seed;
        BuildOptions bo;
        bo.height = bo.width = p.size;
        const MaterializedLayer layer = build(spec, init_params(spec, spec.seed), bo);
        const std::string prefix = "c=" + std::to_string(p.channels) + ",k=" + std::to_string(p.k) +
                                   ",s=" + std::to_string(p.size) + ",draw=" + std::to_string(d) + "/";
        for (Check c : layer_checks(*layer, co)) {
          c.name = prefix + c.name;
          merged.push_back(std::move(c));
        }
      }
      return merged;
    }));
  }
  CertReport r;
  r.subject_type = "layer";
  r.subject = base;
  r.subject["draws"] = draws;
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : grid) points.push_back({{"c", p.channels}, {"k", p.k}, {"s", p.size}});
  r.subject["grid"] = points;
  r.baseline = base.kind == LayerKind::Standard;
  for (auto& j : jobs)
    for (auto& c : j.get()) r.checks.push_back(std::move(c));
  stamp(r, o);
  return r;
}

CertReport check_network(const Network& net, const nlohmann::json& subject, bool baseline,
                         const FeatureBatch& batch, const CheckOptions& o) {
  CertReport r;
  r.subject_type = "network";
  r.subject = subject;
  r.baseline = baseline;

  std::vector<std::future<BoundResult>> jobs;
  for (std::size_t i = 0; i < net.size(); ++i)
    jobs.push_back(std::async(std::launch::async, [&net, &o, i] {
      return net[i]->lipschitz_bound(o.power_iterations, mix(o.seed, i));
    }));
  double product = 1.0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const BoundResult b = jobs[i].get();
    product *= b.value;
    r.checks.push_back(make_check("layer_bound/" + std::to_string(i) + ":" + to_string(net[i]->spec().kind), b.value,
                                  1.0 + 1e-2, to_string(b.method), b.iterations, mix(o.seed, i)));
  }
  r.checks.push_back(make_check("network_bound", product, 1.0 + 1e-2, "product_of_layer_bounds",
                                o.power_iterations, o.seed));

  const auto trace = batch_activation_variance(net, batch);
  const auto mono = variance_monotonicity(trace);
  Check c = make_check("variance_monotone", mono.max_increase, mono.slack, "batch_activation_variance", 0, o.seed);
  c.passed = mono.nonincreasing;
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) os << (i ? "," : "") << trace[i];
  c.note = os.str();
  r.checks.push_back(std::move(c));
  stamp(r, o);
  return r;
}

CertReport check_network(const NetworkSpec& spec, std::uint64_t seed, const FeatureBatch& batch,
                         const CheckOptions& o) {
  const Network net = build_network(spec, seed, Phase::Eval);
  nlohmann::json subject = spec;
  subject["seed"] = seed;
  return check_network(net, subject, spec.kind == LayerKind::Standard, batch, o);
}

}  // namespace lipcmp
