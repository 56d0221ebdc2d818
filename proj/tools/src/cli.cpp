#include "lipcmp_cli/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lipcmp/lipcmp.hpp"

namespace lipcmp::cli {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Parses JSON, reporting syntax errors as path:line:column.
nlohmann::json load_json(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw IoError(path + ":" + std::to_string(line) + ":" + std::to_string(column) + ": malformed JSON (" +
                  e.what() + ")");
  }
}

void write_output(const RunConfig& cfg, const std::string& text, std::ostream& out) {
  if (cfg.output_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(cfg.output_path, std::ios::binary);
  if (!f) throw IoError("cannot write " + cfg.output_path);
  f << text;
  if (!f) throw IoError("failed writing " + cfg.output_path);
}

CheckOptions check_options(const RunConfig& cfg) {
  CheckOptions o;
  o.power_iterations = cfg.power_iterations;
  o.oracle_limit = cfg.oracle_limit;
  o.seed = cfg.seed;
  o.timestamp = cfg.timestamp;
  return o;
}

std::string summary(const CertReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  std::size_t skipped = 0;
  for (const auto& c : r.checks) {
    if (c.skipped) ++skipped;
    os << (c.skipped ? "SKIP" : c.passed ? "PASS" : "FAIL") << ' ' << c.name << " value=" << c.value
       << " threshold=" << c.threshold << " method=" << c.method << '\n';
  }
  os << "overall: " << (r.passed() ? "PASS" : "FAIL") << (r.baseline ? " (baseline, exempt)" : "") << " checks="
     << r.checks.size() << " failed=" << r.failed_count() << " skipped=" << skipped << '\n';
  return os.str();
}

int finish_report(const RunConfig& cfg, const CertReport& r, std::ostream& out) {
  const nlohmann::json j = r;
  write_output(cfg, j.dump(2) + "\n", out);
  if (!cfg.output_path.empty()) out << summary(r);
  return r.passed() ? kExitPass : kExitCheckFailed;
}

int verify_layer(const RunConfig& cfg, std::ostream& out) {
  const nlohmann::json j = load_json(cfg.spec_path);
  const LayerSpec spec = j.get<LayerSpec>();
  const std::size_t size = j.value("size", cfg.size);
  std::vector<double> raw;
  if (!cfg.params_path.empty())
    raw = flat_values(read_lt1(cfg.params_path));
  else
    raw = init_params(spec, cfg.seed);
  return finish_report(cfg, check_layer(spec, raw, size, check_options(cfg)), out);
}

FeatureBatch random_batch(const NetworkSpec& spec, std::size_t n, std::uint64_t seed) {
  const std::size_t s = spec.input_size;
  return FeatureBatch({n, spec.input_channels, s, s}, Rng(seed ^ 0xBA7C4ull).normal_vector(n * spec.input_channels * s * s));
}

int verify_network(const RunConfig& cfg, std::ostream& out) {
  const NetworkSpec spec = load_json(cfg.spec_path).get<NetworkSpec>();
  const FeatureBatch batch = random_batch(spec, cfg.batch, cfg.seed);
  return finish_report(cfg, check_network(spec, cfg.seed, batch, check_options(cfg)), out);
}

int cost(const RunConfig& cfg, std::ostream& out) {
  const LayerKind kind = parse_layer_kind(cfg.kind);
  CostModel m{cfg.b, cfg.s, cfg.c, cfg.k, cfg.t, cfg.t1, cfg.t2};
  std::vector<CostPhase> phases;
  if (cfg.phase == "both")
    phases = {CostPhase::Train, CostPhase::Inference};
  else
    phases = {parse_cost_phase(cfg.phase)};
  std::string csv = cost_csv_header() + "\n";
  for (CostPhase p : phases) csv += to_csv(cost_row(kind, m, p)) + "\n";
  write_output(cfg, csv, out);
  return kExitPass;
}

int cert_acc(const RunConfig& cfg, std::ostream& out) {
  const NetworkSpec spec = load_json(cfg.spec_path).get<NetworkSpec>();
  for (double e : cfg.epsilons)
    if (!(e >= 0.0)) throw ConfigError("epsilon values must be nonnegative");
  const Network net = build_network(spec, cfg.seed);
  const Dataset data = cfg.data_path.empty() ? make_blob_dataset(cfg.samples, spec.classes, spec.input_channels,
                                                                 spec.input_size, 0.1, cfg.seed)
                                             : load_dataset(cfg.data_path);
  const std::vector<double> acc = certified_accuracy(net, data, cfg.epsilons);
  nlohmann::json j;
  j["network"] = spec;
  j["seed"] = cfg.seed;
  j["samples"] = data.size();
  j["dataset"] = cfg.data_path.empty() ? "synthetic-blobs" : cfg.data_path;
  j["results"] = nlohmann::json::array();
  for (std::size_t i = 0; i < acc.size(); ++i)
    j["results"].push_back({{"epsilon", cfg.epsilons[i]},
                            {"threshold", certification_threshold(cfg.epsilons[i])},
                            {"certified_accuracy", acc[i]}});
  write_output(cfg, j.dump(2) + "\n", out);
  return kExitPass;
}

int report(const RunConfig& cfg, std::ostream& out) {
  const CertReport r = load_json(cfg.spec_path).get<CertReport>();
  out << summary(r);
  return r.passed() ? kExitPass : kExitCheckFailed;
}

}  // namespace

ParseResult parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Lipschitz layer certification and cost tool", "lipcmp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  auto common = [&cfg](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Seed for parameter and data generation");
    sub->add_option("-o,--out", cfg.output_path, "Output file (default stdout)");
  };
  auto checks = [&cfg](CLI::App* sub) {
    sub->add_option("--power-iterations", cfg.power_iterations, "Power-method iterations for bounds")
        ->check(CLI::PositiveNumber);
    sub->add_option("--oracle-limit", cfg.oracle_limit, "Largest dense Jacobian side for exact checks");
    sub->add_flag("!--no-timestamp", cfg.timestamp, "Omit the report timestamp");
  };

  CLI::App* vl = app.add_subcommand("verify-layer", "Certify one layer");
  vl->add_option("--spec", cfg.spec_path, "Layer spec JSON")->required()->check(CLI::ExistingFile);
  vl->add_option("--params", cfg.params_path, "LT1 raw parameters")->check(CLI::ExistingFile);
  vl->add_option("--size", cfg.size, "Spatial size when the layer JSON has none")->check(CLI::PositiveNumber);
  common(vl);
  checks(vl);

  CLI::App* vn = app.add_subcommand("verify-network", "Certify a network");
  vn->add_option("--net,--spec", cfg.spec_path, "Network spec JSON")->required()->check(CLI::ExistingFile);
  vn->add_option("--batch", cfg.batch, "Random batch size for the variance trace")->check(CLI::Range(2, 1 << 20));
  common(vn);
  checks(vn);

  CLI::App* co = app.add_subcommand("cost", "Predicted and measured cost table");
  co->add_option("--kind", cfg.kind, "Layer kind")->required();
  co->add_option("--phase", cfg.phase, "train, inference or both")
      ->check(CLI::IsMember({"train", "inference", "both"}));
  co->add_option("--b", cfg.b, "Batch size")->check(CLI::PositiveNumber);
  co->add_option("--s", cfg.s, "Spatial size")->check(CLI::PositiveNumber);
  co->add_option("--c", cfg.c, "Channels")->check(CLI::PositiveNumber);
  co->add_option("--k", cfg.k, "Kernel size")->check(CLI::PositiveNumber);
  co->add_option("--t", cfg.t, "Inner iterations")->check(CLI::PositiveNumber);
  co->add_option("--t1", cfg.t1, "Series terms")->check(CLI::PositiveNumber);
  co->add_option("--t2", cfg.t2, "Normalization power iterations")->check(CLI::PositiveNumber);
  co->add_option("-o,--out", cfg.output_path, "Output CSV (default stdout)");

  CLI::App* ca = app.add_subcommand("cert-acc", "Certified accuracy of a seeded network");
  ca->add_option("--net,--spec", cfg.spec_path, "Network spec JSON")->required()->check(CLI::ExistingFile);
  ca->add_option("--data", cfg.data_path, "Directory with features.lt1 and labels.u32")->check(CLI::ExistingDirectory);
  ca->add_option("--eps", cfg.epsilons, "Radii")->expected(1, -1)->check(CLI::NonNegativeNumber);
  ca->add_option("--samples", cfg.samples, "Synthetic dataset size")->check(CLI::PositiveNumber);
  common(ca);

  CLI::App* rp = app.add_subcommand("report", "Summarize a stored report");
  rp->add_option("--in,--report", cfg.spec_path, "Report JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return {std::nullopt, code == 0 ? kExitPass : kExitUsage};
  }
  if (*vl) cfg.subcommand = Subcommand::VerifyLayer;
  if (*vn) cfg.subcommand = Subcommand::VerifyNetwork;
  if (*co) cfg.subcommand = Subcommand::Cost;
  if (*ca) cfg.subcommand = Subcommand::CertAcc;
  if (*rp) cfg.subcommand = Subcommand::Report;
  return {cfg, kExitPass};
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.subcommand) {
      case Subcommand::VerifyLayer: return verify_layer(cfg, out);
      case Subcommand::VerifyNetwork: return verify_network(cfg, out);
      case Subcommand::Cost: return cost(cfg, out);
      case Subcommand::CertAcc: return cert_acc(cfg, out);
      case Subcommand::Report: return report(cfg, out);
    }
  } catch (const nlohmann::json::exception& e) {
    err << "error: invalid spec: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const ParseResult p = parse_args(argc, argv, out, err);
  if (!p.config) return p.exit_code;
  return run(*p.config, out, err);
}

}  // namespace lipcmp::cli
