#include "lipcmp/arch.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include <nlohmann/json.hpp>

#include "lipcmp/lt1.hpp"
#include "lipcmp/random.hpp"

namespace lipcmp {

namespace {

std::uint64_t layer_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

LayerSpec shape_spec(LayerKind kind, std::size_t c_in, std::size_t c_out) {
  LayerSpec s = LayerSpec::make(kind, c_in, c_out, 1);
  return s;
}

constexpr std::size_t kBlockConvs = 5;
constexpr std::size_t kBatchChunk = 64;

}  // namespace

void to_json(nlohmann::json& j, const NetworkSpec& s) {
  j = nlohmann::json{{"width", s.width},
                     {"kernel", s.kernel},
                     {"classes", s.classes},
                     {"input_channels", s.input_channels},
                     {"input_size", s.input_size},
                     {"kind", to_string(s.kind)},
                     {"tiny_imagenet", s.tiny_imagenet}};
}

void from_json(const nlohmann::json& j, NetworkSpec& s) {
  NetworkSpec d;
  s.width = j.value("width", d.width);
  s.kernel = j.value("kernel", d.kernel);
  s.classes = j.value("classes", d.classes);
  s.input_channels = j.value("input_channels", d.input_channels);
  s.input_size = j.value("input_size", d.input_size);
  s.kind = parse_layer_kind(j.value("kind", to_string(d.kind)));
  s.tiny_imagenet = j.value("tiny_imagenet", d.tiny_imagenet);
}

std::vector<PlannedLayer> plan_network(const NetworkSpec& spec) {
  const std::size_t blocks = spec.block_count();
  const std::size_t w = spec.width;
  if (w == 0 || w % 2 != 0) throw ConfigError("network: width must be positive and even");
  if (spec.input_size == 0 || spec.input_size % (std::size_t{1} << blocks) != 0)
    throw ConfigError("network: input size must be divisible by 2^" + std::to_string(blocks));
  if (spec.input_channels == 0 || spec.input_channels > w)
    throw ConfigError("network: input channels must be in [1, width]");
  if (spec.kernel % 2 == 0) throw ConfigError("network: kernel size must be odd");
  if (spec.kind == LayerKind::MaxMin || spec.kind == LayerKind::Dense || spec.kind == LayerKind::Flatten ||
      spec.kind == LayerKind::ZeroChannelPad || spec.kind == LayerKind::FirstChannels ||
      spec.kind == LayerKind::PixelUnshuffle)
    throw ConfigError("network: kind must be a convolution parameterization");

  std::vector<PlannedLayer> plan;
  std::size_t s = spec.input_size;
  std::size_t t = w;
  plan.push_back({shape_spec(LayerKind::ZeroChannelPad, spec.input_channels, w), s});
  plan.push_back({LayerSpec::make(spec.kind, w, w, 1), s});
  plan.push_back({shape_spec(LayerKind::MaxMin, w, w), s});
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t k = b + 1 == blocks ? 1 : spec.kernel;
    for (std::size_t i = 0; i < kBlockConvs; ++i) {
      plan.push_back({LayerSpec::make(spec.kind, t, t, k), s});
      plan.push_back({shape_spec(LayerKind::MaxMin, t, t), s});
    }
    plan.push_back({shape_spec(LayerKind::FirstChannels, t, t / 2), s});
    plan.push_back({shape_spec(LayerKind::PixelUnshuffle, t / 2, 2 * t), s});
    s /= 2;
    t *= 2;
  }
  const std::size_t d = t * s * s;
  if (spec.classes < 2 || spec.classes > d) throw ConfigError("network: classes must be in [2, " + std::to_string(d) + "]");
  plan.push_back({shape_spec(LayerKind::Flatten, t, d), s});
  plan.push_back({LayerSpec::make(spec.kind, d, d, 1), 1});
  plan.push_back({shape_spec(LayerKind::FirstChannels, d, spec.classes), 1});
  return plan;
}

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& p : plan_network(spec)) n += parameter_count(p.spec) + bias_count(p.spec);
  return n;
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed, Phase phase) {
  const auto plan = plan_network(spec);
  std::vector<std::vector<double>> raw;
  raw.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) raw.push_back(init_params(plan[i].spec, layer_seed(seed, i)));
  Network net;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    LayerSpec ls = plan[i].spec;
    ls.seed = layer_seed(seed, i);
    BuildOptions opt;
    opt.height = opt.width = plan[i].size;
    opt.phase = phase;
    net.push_back(build(ls, raw[i], opt));
  }
  return net;
}

Network build_network(const NetworkSpec& spec, const std::vector<std::vector<double>>& raw_params, Phase phase) {
  const auto plan = plan_network(spec);
  if (raw_params.size() != plan.size())
    throw ShapeError("network: expected parameters for " + std::to_string(plan.size()) + " layers");
  Network net;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    BuildOptions opt;
    opt.height = opt.width = plan[i].size;
    opt.phase = phase;
    net.push_back(build(plan[i].spec, raw_params[i], opt));
  }
  return net;
}

FeatureBatch network_forward(const Network& net, const FeatureBatch& x) {
  FeatureBatch y = x;
  for (const auto& layer : net) y = layer->forward(y);
  return y;
}

double certification_threshold(double epsilon) { return epsilon * std::sqrt(2.0); }

MarginResult margin(const std::vector<double>& logits, std::size_t label, const std::vector<double>& epsilons) {
  if (logits.size() < 2) throw ConfigError("margin: at least two classes required");
  if (label >= logits.size())
    throw IndexError("margin: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (j != label) best_other = std::max(best_other, logits[j]);
  MarginResult r;
  r.label = label;
  r.margin = logits[label] - best_other;
  for (double e : epsilons) r.certified_at[e] = r.margin > certification_threshold(e);
  return r;
}

Dataset make_blob_dataset(std::size_t samples, std::size_t classes, std::size_t channels, std::size_t size,
                          double spread, std::uint64_t seed) {
  if (classes == 0) throw ConfigError("dataset: classes must be positive");
  Rng rng(seed);
  const std::size_t dim = channels * size * size;
  std::vector<std::vector<double>> centres(classes);
  for (auto& c : centres) {
    c.resize(dim);
    for (auto& v : c) v = rng.uniform();
  }
  Dataset d;
  d.features = FeatureBatch(samples, channels, size, size);
  d.labels.resize(samples);
  for (std::size_t n = 0; n < samples; ++n) {
    const auto label = static_cast<std::uint32_t>(n % classes);
    d.labels[n] = label;
    double* p = d.features.plane(n, 0);
    for (std::size_t i = 0; i < dim; ++i) p[i] = centres[label][i] + spread * rng.normal();
  }
  return d;
}

Dataset load_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  Dataset d;
  d.features = feature_batch_from_lt1(read_lt1((root / "features.lt1").string()));
  d.labels = read_u32_file((root / "labels.u32").string());
  if (d.labels.size() != d.features.batch())
    throw ShapeError("dataset: " + std::to_string(d.labels.size()) + " labels for " +
                     std::to_string(d.features.batch()) + " samples");
  return d;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_lt1((root / "features.lt1").string(), to_lt1(data.features));
  write_u32_file((root / "labels.u32").string(), data.labels);
}

std::vector<double> certified_accuracy(const Network& net, const Dataset& data, const std::vector<double>& epsilons) {
  if (data.size() == 0) throw ConfigError("certified_accuracy: dataset is empty");
  std::vector<std::size_t> hits(epsilons.size(), 0);
  const auto& f = data.features;
  const std::size_t stride = f.sample_size();
  for (std::size_t start = 0; start < data.size(); start += kBatchChunk) {
    const std::size_t n = std::min(kBatchChunk, data.size() - start);
    FeatureBatch chunk({n, f.channels(), f.height(), f.width()},
                       std::vector<double>(f.data() + start * stride, f.data() + (start + n) * stride));
    const FeatureBatch logits = network_forward(net, chunk);
    const std::size_t classes = logits.sample_size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> row(logits.data() + i * classes, logits.data() + (i + 1) * classes);
      const MarginResult m = margin(row, data.labels[start + i]);
      for (std::size_t e = 0; e < epsilons.size(); ++e)
        if (m.margin > certification_threshold(epsilons[e])) ++hits[e];
    }
  }
  std::vector<double> out(epsilons.size());
  for (std::size_t e = 0; e < out.size(); ++e)
    out[e] = static_cast<double>(hits[e]) / static_cast<double>(data.size());
  return out;
}

double certified_accuracy(const Network& net, const Dataset& data, double epsilon) {
  return certified_accuracy(net, data, std::vector<double>{epsilon}).front();
}

double margin_loss(const FeatureBatch& logits, const std::vector<std::uint32_t>& labels, double epsilon,
                   double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("margin_loss: temperature must be positive");
  const std::size_t b = logits.batch(), classes = logits.sample_size();
  if (labels.size() != b) throw ShapeError("margin_loss: label count differs from batch size");
  if (b == 0) return 0.0;
  const double offset = 2.0 * std::sqrt(2.0) * epsilon;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= classes) throw IndexError("margin_loss: label out of range");
    std::vector<double> z(logits.data() + i * classes, logits.data() + (i + 1) * classes);
    z[labels[i]] -= offset;
    for (auto& v : z) v /= temperature;
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    total += mx + std::log(sum) - z[labels[i]];
  }
  return total / static_cast<double>(b);
}

}  // namespace lipcmp
