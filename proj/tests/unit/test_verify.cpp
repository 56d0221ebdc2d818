#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"

namespace lipcmp {
namespace {

using testing::random_batch;

NetworkSpec desk(LayerKind kind) {
  NetworkSpec s;
  s.width = 4;
  s.kind = kind;
  return s;
}

CheckOptions quick() {
  CheckOptions o;
  o.power_iterations = 200;
  o.timestamp = false;
  o.seed = 3;
  return o;
}

const Check& find(const CertReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::out_of_range("no check " + name);
}

TEST(Variance, ConstantBatchHasZeroVariance) {
  const Network net = build_network(desk(LayerKind::AOL), 1);
  for (double v : batch_activation_variance(net, FeatureBatch(4, 3, 32, 32, 0.7))) EXPECT_NEAR(v, 0.0, 1e-20);
}

TEST(Variance, OrthogonalLayerPreservesVariance) {
  BuildOptions o;
  o.height = o.width = 8;
  const LayerSpec spec = LayerSpec::make(LayerKind::Cayley, 4, 4, 3);
  const Network net{build(spec, init_params(spec, 2), o)};
  Rng rng(2);
  const auto trace = batch_activation_variance(net, random_batch(rng, 16, 4, 8, 8));
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_NEAR(trace[1], trace[0], 1e-9 * trace[0]);
}

TEST(Variance, NeedsTwoSamples) {
  const Network net = build_network(desk(LayerKind::AOL), 1);
  EXPECT_THROW(batch_activation_variance(net, FeatureBatch(1, 3, 32, 32)), ConfigError);
}

TEST(Variance, MonotoneForEveryLipschitzKind) {
  Rng rng(4);
  const FeatureBatch batch = random_batch(rng, 8, 3, 32, 32);
  // CPL's certification build runs 10,000 power iterations per layer; the
  // acceptance run covers it.
  for (LayerKind kind : lipschitz_kinds()) {
    if (kind == LayerKind::CPL) continue;
    SCOPED_TRACE(to_string(kind));
    const auto mono = variance_monotonicity(batch_activation_variance(build_network(desk(kind), 5), batch));
    EXPECT_TRUE(mono.nonincreasing) << mono.max_increase;
  }
}

TEST(Variance, DetectsInjectedExpansion) {
  Network net = build_network(desk(LayerKind::AOL), 6);
  net.insert(net.begin() + 3, make_scale_layer(net[2]->output_shape(), 1.5));
  Rng rng(6);
  const auto mono = variance_monotonicity(batch_activation_variance(net, random_batch(rng, 8, 3, 32, 32)));
  EXPECT_FALSE(mono.nonincreasing);
  EXPECT_GT(mono.max_increase, 0.0);
}

TEST(Monotonicity, SlackIsRelative) {
  EXPECT_TRUE(variance_monotonicity({1.0, 1.0 + 5e-10, 0.5}).nonincreasing);
  EXPECT_FALSE(variance_monotonicity({1.0, 1.0 + 1e-6, 0.5}).nonincreasing);
  EXPECT_TRUE(variance_monotonicity({}).nonincreasing);
  // Deep layers carry tiny variances; an increase there still counts.
  EXPECT_FALSE(variance_monotonicity({1.0, 1e-20, 2e-20}).nonincreasing);
  EXPECT_FALSE(variance_monotonicity({0.0, 1e-300}).nonincreasing);
  EXPECT_TRUE(variance_monotonicity({0.0, 0.0}).nonincreasing);
}

TEST(CheckLayer, CayleyPasses) {
  const LayerSpec spec = LayerSpec::make(LayerKind::Cayley, 4, 4, 3);
  const CertReport r = check_layer(spec, init_params(spec, 1), 8, quick());
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.failed_count(), 0u);
  EXPECT_TRUE(find(r, "sigma_max").passed);
  EXPECT_TRUE(find(r, "orthogonality").passed);
  EXPECT_EQ(find(r, "sigma_max").method, "exact_svd");
}

TEST(CheckLayer, StandardBaselineIsExempt) {
  const LayerSpec spec = LayerSpec::make(LayerKind::Standard, 4, 4, 3);
  std::vector<double> raw = init_params(spec, 1);
  for (auto& v : raw) v *= 10.0;
  const CertReport r = check_layer(spec, raw, 8, quick());
  EXPECT_TRUE(r.baseline);
  EXPECT_FALSE(find(r, "sigma_max").passed);
  EXPECT_GT(r.failed_count(), 0u);
  EXPECT_TRUE(r.passed());
}

TEST(CheckLayer, DetectsScaledKernelAfterMaterialization) {
  // A Cayley layer followed by a factor-2 scale stands in for a kernel scaled
  // after materialization; the composite is a Standard conv with 2 Q.
  BuildOptions o;
  o.height = o.width = 4;
  const LayerSpec spec = LayerSpec::make(LayerKind::Cayley, 2, 2, 3);
  const auto layer = build(spec, init_params(spec, 8), o);
  const RealMatrix j = jacobian_dense(*layer);
  const LayerSpec dense = LayerSpec::make(LayerKind::Dense, j.cols(), j.rows());
  BuildOptions d;
  const auto scaled = build(dense, (2.0 * j).values(), d);
  CheckOptions q = quick();
  const auto checks = layer_checks(*scaled, q);
  ASSERT_FALSE(checks.empty());
  EXPECT_EQ(checks[0].name, "sigma_max");
  EXPECT_NEAR(checks[0].value, 2.0, 1e-9);
  EXPECT_FALSE(checks[0].passed);
}

TEST(CheckLayer, AolRecordsBoundCheck) {
  const LayerSpec spec = LayerSpec::make(LayerKind::AOL, 3, 3, 3);
  const CertReport r = check_layer(spec, init_params(spec, 5), 6, quick());
  EXPECT_TRUE(find(r, "aol_bound").passed);
  EXPECT_TRUE(r.passed());
}

TEST(CheckLayer, OracleLimitSkips) {
  const LayerSpec spec = LayerSpec::make(LayerKind::Cayley, 4, 4, 3);
  CheckOptions o = quick();
  o.oracle_limit = 16;
  const CertReport r = check_layer(spec, init_params(spec, 1), 8, o);
  EXPECT_TRUE(find(r, "sigma_max").skipped);
  EXPECT_FALSE(find(r, "sigma_max").note.empty());
  EXPECT_TRUE(r.passed());
}

TEST(CheckLayer, DeterministicAndRoundTrips) {
  const LayerSpec spec = LayerSpec::make(LayerKind::SLL, 3, 3, 3);
  const CertReport a = check_layer(spec, init_params(spec, 4), 6, quick());
  const CertReport b = check_layer(spec, init_params(spec, 4), 6, quick());
  EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  const CertReport c = nlohmann::json(a).get<CertReport>();
  EXPECT_EQ(c.checks, a.checks);
  EXPECT_EQ(c.subject, a.subject);
  EXPECT_EQ(c.passed(), a.passed());
}

TEST(CheckLayerGrid, NamesCarryGridPoint) {
  const LayerSpec base = LayerSpec::make(LayerKind::AOL, 2, 2, 1);
  const CertReport r = check_layer_grid(base, {{2, 1, 4}, {2, 3, 4}}, 2, quick());
  EXPECT_EQ(r.checks.front().name.rfind("c=2,k=1,s=4,draw=0/", 0), 0u);
  EXPECT_EQ(r.checks.back().name.rfind("c=2,k=3,s=4,draw=1/", 0), 0u);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(nlohmann::json(r).dump(), nlohmann::json(check_layer_grid(base, {{2, 1, 4}, {2, 3, 4}}, 2, quick())).dump());
}

TEST(Tolerances, PerKind) {
  EXPECT_EQ(lipschitz_tolerance(LayerKind::SOC), 1e-3);
  EXPECT_EQ(lipschitz_tolerance(LayerKind::Cayley), 1e-6);
  EXPECT_EQ(*orthogonality_tolerance(LayerKind::SOC), 1e-2);
  EXPECT_EQ(*orthogonality_tolerance(LayerKind::LOT), 1e-4);
  EXPECT_FALSE(orthogonality_tolerance(LayerKind::AOL).has_value());
}

TEST(NetworkBound, ProductDominatesExactOnLinearToy) {
  Rng rng(9);
  BuildOptions o;
  const LayerSpec spec = LayerSpec::make(LayerKind::Dense, 5, 5);
  const RealMatrix a = testing::random_matrix(rng, 5, 5), b = testing::random_matrix(rng, 5, 5);
  const Network net{build(spec, a.values(), o), build(spec, b.values(), o)};
  CheckOptions q = quick();
  q.power_iterations = 2000;
  const CertReport r = check_network(net, nlohmann::json::object(), true, random_batch(rng, 4, 5, 1, 1), q);
  const double exact = testing::svd_sigma_max(matmul(b, a));
  EXPECT_GE(find(r, "network_bound").value, exact * (1 - 1e-9));
}

TEST(NetworkBound, AolNetworkIsCertified) {
  Rng rng(10);
  const CertReport r = check_network(desk(LayerKind::AOL), 10, random_batch(rng, 4, 3, 32, 32), quick());
  EXPECT_LE(find(r, "network_bound").value, 1.01);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.subject.at("seed"), 10);
}

TEST(NetworkBound, StandardNetworkIsBaseline) {
  Rng rng(11);
  const CertReport r = check_network(desk(LayerKind::Standard), 11, random_batch(rng, 4, 3, 32, 32), quick());
  EXPECT_TRUE(r.baseline);
  EXPECT_TRUE(r.passed());
}

}  // namespace
}  // namespace lipcmp
