#include <cmath>

#include <gtest/gtest.h>

#include "generators.hpp"

namespace lipcmp {
namespace {

using testing::for_all;
using testing::pick;
using testing::random_batch;

const std::vector<LayerKind> kCertifiedKinds{LayerKind::AOL, LayerKind::BCOP, LayerKind::Cayley, LayerKind::SOC,
                                             LayerKind::LOT, LayerKind::CPL,  LayerKind::SLL,    LayerKind::Sandwich,
                                             LayerKind::MaxMin};

struct Draw {
  LayerSpec spec;
  MaterializedLayer layer;
  std::size_t s;
};

Draw draw_layer(Rng& rng, LayerKind kind) {
  const std::size_t c = pick(rng, {2, 4}), k = pick(rng, {1, 3}), s = pick(rng, {4, 8});
  LayerSpec spec = LayerSpec::make(kind, c, c, k);
  spec.seed = rng.next();
  BuildOptions o;
  o.height = o.width = s;
  o.bias = rng.normal_vector(bias_count(spec), 0.1);
  return {spec, build(spec, init_params(spec, spec.seed), o), s};
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double distance(const FeatureBatch& a, const FeatureBatch& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  return std::sqrt(s);
}

TEST(Property, VjpIsAdjointOfJvp) {
  for (LayerKind kind : kCertifiedKinds) {
    SCOPED_TRACE(to_string(kind));
    for_all(4, 60 + static_cast<std::uint64_t>(kind), [kind](Rng& rng, std::size_t) {
      const Draw d = draw_layer(rng, kind);
      const Shape3 in = d.layer->input_shape(), out = d.layer->output_shape();
      const FeatureBatch at = random_batch(rng, 1, in.channels, in.height, in.width);
      const FeatureBatch v = random_batch(rng, 1, in.channels, in.height, in.width);
      const FeatureBatch u = random_batch(rng, 1, out.channels, out.height, out.width);
      const double lhs = dot(d.layer->jvp(at, v).values(), u.values());
      const double rhs = dot(v.values(), d.layer->vjp(at, u).values());
      EXPECT_NEAR(lhs, rhs, 1e-9 * (1 + std::abs(lhs)));
    });
  }
}

TEST(Property, EmpiricalLipschitzOnRandomPairs) {
  for (LayerKind kind : kCertifiedKinds) {
    SCOPED_TRACE(to_string(kind));
    for_all(4, 70 + static_cast<std::uint64_t>(kind), [kind](Rng& rng, std::size_t) {
      const Draw d = draw_layer(rng, kind);
      const Shape3 in = d.layer->input_shape();
      for (int i = 0; i < 5; ++i) {
        const FeatureBatch x = random_batch(rng, 1, in.channels, in.height, in.width);
        const FeatureBatch y = random_batch(rng, 1, in.channels, in.height, in.width);
        const double ratio = distance(d.layer->forward(x), d.layer->forward(y)) / distance(x, y);
        EXPECT_LE(ratio, 1.0 + lipschitz_tolerance(kind));
      }
    });
  }
}

TEST(Property, LocalJacobianNormWithinTolerance) {
  for (LayerKind kind : kCertifiedKinds) {
    SCOPED_TRACE(to_string(kind));
    for_all(3, 80 + static_cast<std::uint64_t>(kind), [kind](Rng& rng, std::size_t) {
      const Draw d = draw_layer(rng, kind);
      const double sigma = testing::svd_sigma_max(jacobian_dense(*d.layer, nullptr, rng.next()));
      EXPECT_LE(sigma, 1.0 + lipschitz_tolerance(kind));
    });
  }
}

TEST(Property, LinearLayersAreAffine) {
  for (LayerKind kind : {LayerKind::AOL, LayerKind::BCOP, LayerKind::Cayley, LayerKind::SOC, LayerKind::LOT}) {
    SCOPED_TRACE(to_string(kind));
    for_all(3, 90 + static_cast<std::uint64_t>(kind), [kind](Rng& rng, std::size_t) {
      const Draw d = draw_layer(rng, kind);
      ASSERT_TRUE(d.layer->is_linear());
      const Shape3 in = d.layer->input_shape();
      const FeatureBatch x = random_batch(rng, 1, in.channels, in.height, in.width);
      const FeatureBatch zero(1, in.channels, in.height, in.width);
      const FeatureBatch fx = d.layer->forward(x), f0 = d.layer->forward(zero), jx = d.layer->jvp(zero, x);
      for (std::size_t i = 0; i < fx.size(); ++i) EXPECT_NEAR(fx.values()[i] - f0.values()[i], jx.values()[i], 1e-10);
    });
  }
}

TEST(Property, OrthogonalKindsPreserveDistances) {
  for (LayerKind kind : {LayerKind::BCOP, LayerKind::Cayley}) {
    SCOPED_TRACE(to_string(kind));
    for_all(4, 100 + static_cast<std::uint64_t>(kind), [kind](Rng& rng, std::size_t) {
      const Draw d = draw_layer(rng, kind);
      const Shape3 in = d.layer->input_shape();
      const FeatureBatch x = random_batch(rng, 1, in.channels, in.height, in.width);
      const FeatureBatch y = random_batch(rng, 1, in.channels, in.height, in.width);
      EXPECT_NEAR(distance(d.layer->forward(x), d.layer->forward(y)), distance(x, y), 1e-8 * distance(x, y));
    });
  }
}

TEST(Property, MaxMinPreservesNorm) {
  for_all(20, 110, [](Rng& rng, std::size_t) {
    const std::size_t c = pick(rng, {1, 2, 3, 6}), s = pick(rng, {1, 3, 4});
    const auto layer = build(LayerSpec::make(LayerKind::MaxMin, c, c), {}, [&] {
      BuildOptions o;
      o.height = o.width = s;
      return o;
    }());
    const FeatureBatch x = random_batch(rng, 2, c, s, s);
    EXPECT_DOUBLE_EQ(squared_norm(layer->forward(x)), squared_norm(x));
  });
}

TEST(Property, PowerEstimateNeverExceedsExactNorm) {
  for_all(20, 120, [](Rng& rng, std::size_t) {
    const KernelTensor k = testing::random_kernel(rng, pick(rng, {1, 2, 3}), pick(rng, {1, 2, 3}), pick(rng, {1, 3}));
    const double exact = exact_conv_spectral_norm(k, 4).value;
    const double est = power_method_conv(k, {k.c_in(), 4, 4}, PaddingMode::Circular, PowerState::seeded(rng.next()),
                                         1 + rng.next() % 50)
                           .sigma_estimate;
    EXPECT_LE(est, exact * (1 + 1e-12));
  });
}

TEST(Property, BiasNeverChangesTheJacobian) {
  for (LayerKind kind : {LayerKind::AOL, LayerKind::Cayley, LayerKind::SOC}) {
    Rng rng(130 + static_cast<std::uint64_t>(kind));
    const LayerSpec spec = LayerSpec::make(kind, 2, 2, 3);
    const auto raw = init_params(spec, 5);
    BuildOptions a, b;
    a.height = a.width = b.height = b.width = 4;
    b.bias = rng.normal_vector(2);
    EXPECT_EQ(jacobian_dense(*build(spec, raw, a)).values(), jacobian_dense(*build(spec, raw, b)).values());
  }
}

}  // namespace
}  // namespace lipcmp
