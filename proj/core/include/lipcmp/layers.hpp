#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lipcmp/conv.hpp"
#include "lipcmp/spectral.hpp"

namespace lipcmp {

enum class LayerKind {
  Standard,
  AOL,
  BCOP,
  Cayley,
  SOC,
  LOT,
  CPL,
  SLL,
  Sandwich,
  MaxMin,
  ZeroChannelPad,
  FirstChannels,
  PixelUnshuffle,
  Dense,
  Flatten,
};

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

// The seven 1-Lipschitz parameterizations compared against the baseline.
const std::vector<LayerKind>& lipschitz_kinds();
bool is_orthogonal_kind(LayerKind kind);

enum class Phase { Train, Eval };

struct LayerSpec {
  LayerKind kind = LayerKind::Standard;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  PaddingMode padding = PaddingMode::Circular;
  std::size_t train_iters = 0;
  std::size_t eval_iters = 0;
  std::uint64_t seed = 0;

  // Spec with the kind's default inner iteration counts.
  static LayerSpec make(LayerKind kind, std::size_t c_in, std::size_t c_out, std::size_t k = 1);

  std::size_t iterations(Phase phase) const { return phase == Phase::Train ? train_iters : eval_iters; }
  bool operator==(const LayerSpec&) const = default;
};

void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);

// Throws ConfigError for invalid combinations.
void validate(const LayerSpec& spec);

// Raw parameter count, biases excluded (BCOP: k c^2).
std::size_t parameter_count(const LayerSpec& spec);
std::size_t bias_count(const LayerSpec& spec);

// Standard normal scaled by 1/sqrt(c_in k^2).
std::vector<double> init_params(const LayerSpec& spec, std::uint64_t seed);

struct BuildOptions {
  std::size_t height = 1;
  std::size_t width = 1;
  Phase phase = Phase::Eval;
  std::vector<double> bias;                // empty means zero
  std::optional<PowerState> power_state;   // warm start for CPL
  std::size_t reshape_iterations = 100;    // SOC normalization
};

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const { return channels * height * width; }
  bool operator==(const Shape3&) const = default;
};

class Layer {
 public:
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  Shape3 input_shape() const { return in_; }
  Shape3 output_shape() const { return out_; }

  virtual FeatureBatch forward(const FeatureBatch& x) const = 0;
  // Jacobian at the single-sample point `at` applied to each sample of v.
  virtual FeatureBatch jvp(const FeatureBatch& at, const FeatureBatch& v) const = 0;
  virtual FeatureBatch vjp(const FeatureBatch& at, const FeatureBatch& u) const = 0;
  virtual bool is_linear() const = 0;
  // Smallest |pre-activation| at `at`; infinity for layers without kinks.
  virtual double kink_distance(const FeatureBatch& at) const;
  // Upper bound on the layer's Lipschitz constant.
  virtual BoundResult lipschitz_bound(std::size_t iterations, std::uint64_t seed) const;
  // Flattened materialized weights, for cache-coherence checks.
  virtual std::vector<double> cached_weights() const { return {}; }

 protected:
  Layer(LayerSpec spec, Shape3 in, Shape3 out) : spec_(spec), in_(in), out_(out) {}

  void check_input(const FeatureBatch& x) const;
  void check_output(const FeatureBatch& y, const char* stage) const;
  BoundResult linear_power_bound(std::size_t iterations, std::uint64_t seed) const;

  LayerSpec spec_;
  Shape3 in_;
  Shape3 out_;
};

using MaterializedLayer = std::shared_ptr<const Layer>;

MaterializedLayer build(const LayerSpec& spec, const std::vector<double>& raw_params,
                        const BuildOptions& options);

// Multiplies its input by `factor`; used for fault injection.
MaterializedLayer make_scale_layer(Shape3 shape, double factor);

// Dense Jacobian (out_size x in_size). Linear layers are probed exactly;
// piecewise-linear layers at `at` or at a seeded random point away from kinks.
RealMatrix jacobian_dense(const Layer& layer, const FeatureBatch* at = nullptr, std::uint64_t seed = 0);

// Sandwich layer with Psi folded into the bias.
MaterializedLayer sandwich_fold(const MaterializedLayer& layer);

// Power-method state of a CPL layer (for warm starts).
std::optional<PowerState> power_state_of(const Layer& layer);

}  // namespace lipcmp
