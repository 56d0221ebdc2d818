#include "lipcmp/complexity.hpp"

#include "lipcmp/random.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace lipcmp {

namespace {

LayerSpec cost_spec(LayerKind kind, const CostModel& m) {
  LayerSpec spec = LayerSpec::make(kind, m.c, m.c, m.k);
  switch (kind) {
    case LayerKind::BCOP:
    case LayerKind::LOT:
      spec.train_iters = spec.eval_iters = m.t;
      break;
    case LayerKind::SOC:
      spec.train_iters = spec.eval_iters = m.t1;
      break;
    case LayerKind::CPL:
      // One warm-started power iteration per training step.
      spec.train_iters = spec.eval_iters = 1;
      break;
    default:
      break;
  }
  return spec;
}

std::size_t iterations_column(LayerKind kind, const CostModel& m) {
  switch (kind) {
    case LayerKind::BCOP:
    case LayerKind::LOT: return m.t;
    case LayerKind::SOC: return m.t1;
    case LayerKind::CPL: return 1;
    default: return 0;
  }
}

}  // namespace

void CostModel::validate() const {
  if (b == 0 || s == 0 || c == 0 || k == 0 || t == 0 || t1 == 0 || t2 == 0)
    throw ConfigError("cost model: all sizes must be positive");
  if (k % 2 == 0) throw ConfigError("cost model: kernel size must be odd");
}

std::string to_string(CostPhase phase) { return phase == CostPhase::Train ? "train" : "inference"; }

CostPhase parse_cost_phase(const std::string& name) {
  if (name == "train") return CostPhase::Train;
  if (name == "inference" || name == "eval") return CostPhase::Inference;
  throw ConfigError("unknown cost phase '" + name + "'");
}

const std::vector<LayerKind>& costed_kinds() {
  static const std::vector<LayerKind> kinds{LayerKind::Standard, LayerKind::AOL, LayerKind::BCOP,
                                            LayerKind::Cayley,   LayerKind::CPL, LayerKind::LOT,
                                            LayerKind::SLL,      LayerKind::SOC, LayerKind::Sandwich};
  return kinds;
}

OpCount predicted_cost(LayerKind kind, const CostModel& m, CostPhase phase) {
  m.validate();
  const double b = double(m.b), s2 = double(m.s * m.s), c = double(m.c), k = double(m.k), t = double(m.t);
  const double C = m.C(), M = m.M(), P = m.P();
  const bool train = phase == CostPhase::Train;
  switch (kind) {
    case LayerKind::Standard:
      return {C, M + P};
    case LayerKind::AOL:
      return train ? OpCount{C + c * c * c * k * k * k * k, M + 5 * P} : OpCount{C, M + P};
    case LayerKind::BCOP:
      return train ? OpCount{C + c * c * c * k * t + c * c * c * k * k * k, M + c * c * k * t + c * c * k * k * k}
                   : OpCount{C, M + P};
    case LayerKind::Cayley:
      return train ? OpCount{b * s2 * c * c + s2 * c * c * c, 2.5 * M + 1.5 * s2 * c * c}
                   : OpCount{b * s2 * c * c, M + s2 * c * c};
    case LayerKind::CPL:
      return train ? OpCount{2 * C + s2 * c * c * k * k, 3 * M + P + s2 * c} : OpCount{2 * C, M + P};
    case LayerKind::LOT:
      return train ? OpCount{b * s2 * c * c + 4 * s2 * c * c * c * t, 3 * M + 4 * s2 * c * c * t}
                   : OpCount{b * s2 * c * c, M + s2 * c * c};
    case LayerKind::SLL:
      return train ? OpCount{2 * C + c * c * c * k * k * k * k, 3 * M + 5 * P} : OpCount{2 * C, M + P};
    case LayerKind::SOC: {
      const double t1 = double(m.t1), t2 = double(m.t2);
      return train ? OpCount{C * t1 + c * c * k * k * t2, M * t1 + P} : OpCount{C * t1, M + P};
    }
    case LayerKind::Sandwich:
      // Two frequency-domain products and one generalized Cayley map per frequency.
      return train ? OpCount{2 * b * s2 * c * c + s2 * c * c * c, 3 * M + 3 * s2 * c * c}
                   : OpCount{2 * b * s2 * c * c, M + 2 * s2 * c * c};
    default:
      throw ConfigError("no cost model for layer kind " + to_string(kind));
  }
}

OpCount measured_cost(LayerKind kind, const CostModel& m, CostPhase phase) {
  m.validate();
  (void)predicted_cost(kind, m, phase);
  LayerSpec spec = cost_spec(kind, m);
  BuildOptions opt;
  opt.height = opt.width = m.s;
  opt.phase = Phase::Train;
  opt.reshape_iterations = m.t2;
  auto input = [&] {
    return FeatureBatch({m.b, m.c, m.s, m.s}, Rng(spec.seed + 1).normal_vector(m.b * m.c * m.s * m.s));
  };
  if (phase == CostPhase::Train) {
    CountingScope scope;
    {
      const std::vector<double> raw = init_params(spec, spec.seed);
      const FeatureBatch x = input();
      const MaterializedLayer layer = build(spec, raw, opt);
      const FeatureBatch y = layer->forward(x);
    }
    return scope.result();
  }
  const MaterializedLayer layer = build(spec, init_params(spec, spec.seed), opt);
  CountingScope scope;
  {
    const FeatureBatch x = input();
    const FeatureBatch y = layer->forward(x);
  }
  OpCount r = scope.result();
  // Cached weights stay live throughout inference.
  r.peak_live_values += double(layer->cached_weights().size());
  return r;
}

CostRow cost_row(LayerKind kind, const CostModel& model, CostPhase phase) {
  return {kind, phase, model, predicted_cost(kind, model, phase), measured_cost(kind, model, phase)};
}

std::string cost_csv_header() {
  return "kind,phase,b,s,c,k,t,predicted_macs,measured_macs,predicted_mem,measured_peak";
}

std::string to_csv(const CostRow& r) {
  std::ostringstream os;
  os << std::setprecision(15) << to_string(r.kind) << ',' << to_string(r.phase) << ',' << r.model.b << ','
     << r.model.s << ',' << r.model.c << ',' << r.model.k << ',' << iterations_column(r.kind, r.model) << ','
     << r.predicted.macs << ',' << r.measured.macs << ',' << r.predicted.peak_live_values << ','
     << r.measured.peak_live_values;
  return os.str();
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("log_log_slope: need at least two paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ConfigError("log_log_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= double(x.size());
  my /= double(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw ConfigError("log_log_slope: x values must differ");
  return sxy / sxx;
}

}  // namespace lipcmp
