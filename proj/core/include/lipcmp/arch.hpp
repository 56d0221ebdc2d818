#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lipcmp/layers.hpp"

namespace lipcmp {

// Benchmark network: ZeroChannelPad -> 1x1 conv -> MaxMin -> Downsize Blocks
// (last with k=1) -> Flatten -> Linear -> FirstChannels(classes).
struct NetworkSpec {
  std::size_t width = 16;
  std::size_t kernel = 3;
  std::size_t classes = 10;
  std::size_t input_channels = 3;
  std::size_t input_size = 32;
  LayerKind kind = LayerKind::Standard;
  // Adds one Downsize Block for 64x64 inputs.
  bool tiny_imagenet = false;

  std::size_t block_count() const { return tiny_imagenet ? 6 : 5; }
  bool operator==(const NetworkSpec&) const = default;
};

void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

// Layer spec chain with the spatial size each layer sees.
struct PlannedLayer {
  LayerSpec spec;
  std::size_t size = 0;
};

std::vector<PlannedLayer> plan_network(const NetworkSpec& spec);

// Raw parameters plus biases over the whole chain.
std::size_t parameter_count(const NetworkSpec& spec);

using Network = std::vector<MaterializedLayer>;

// Parameters drawn from `seed`; biases are zero.
Network build_network(const NetworkSpec& spec, std::uint64_t seed, Phase phase = Phase::Eval);
Network build_network(const NetworkSpec& spec, const std::vector<std::vector<double>>& raw_params,
                      Phase phase = Phase::Eval);

FeatureBatch network_forward(const Network& net, const FeatureBatch& x);

struct MarginResult {
  double margin = 0.0;
  std::size_t label = 0;
  std::map<double, bool> certified_at;
};

double certification_threshold(double epsilon);

MarginResult margin(const std::vector<double>& logits, std::size_t label, const std::vector<double>& epsilons = {});

struct Dataset {
  FeatureBatch features;
  std::vector<std::uint32_t> labels;
  std::size_t size() const { return labels.size(); }
};

// Isotropic Gaussian blobs around random class centres.
Dataset make_blob_dataset(std::size_t samples, std::size_t classes, std::size_t channels, std::size_t size,
                          double spread, std::uint64_t seed);
// Reads features.lt1 and labels.u32 from `dir`.
Dataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const Dataset& data);

double certified_accuracy(const Network& net, const Dataset& data, double epsilon);
std::vector<double> certified_accuracy(const Network& net, const Dataset& data, const std::vector<double>& epsilons);

// Offset softmax cross-entropy: true logit minus 2*sqrt(2)*epsilon, all
// logits divided by the temperature; mean over rows of the (b x classes) batch.
double margin_loss(const FeatureBatch& logits, const std::vector<std::uint32_t>& labels, double epsilon,
                   double temperature = 0.25);

}  // namespace lipcmp
