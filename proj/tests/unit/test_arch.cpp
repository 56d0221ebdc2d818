#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"

namespace lipcmp {
namespace {

using testing::for_all;
using testing::random_batch;

NetworkSpec desk(LayerKind kind) {
  NetworkSpec s;
  s.width = 4;
  s.kind = kind;
  return s;
}

TEST(Network, JsonRoundTrip) {
  NetworkSpec s = desk(LayerKind::SOC);
  s.tiny_imagenet = true;
  s.input_size = 64;
  const nlohmann::json j = s;
  EXPECT_EQ(j.get<NetworkSpec>(), s);
}

TEST(Network, PlanFollowsBlockLayout) {
  const auto plan = plan_network(desk(LayerKind::AOL));
  ASSERT_EQ(plan.size(), 3 + 5 * 12 + 3);
  EXPECT_EQ(plan[0].spec.kind, LayerKind::ZeroChannelPad);
  EXPECT_EQ(plan[1].spec.kind, LayerKind::AOL);
  EXPECT_EQ(plan[1].spec.k, 1u);
  EXPECT_EQ(plan[2].spec.kind, LayerKind::MaxMin);
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t base = 3 + 12 * b;
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(plan[base + 2 * i].spec.kind, LayerKind::AOL);
      EXPECT_EQ(plan[base + 2 * i].spec.k, b == 4 ? 1u : 3u);
      EXPECT_EQ(plan[base + 2 * i + 1].spec.kind, LayerKind::MaxMin);
    }
    EXPECT_EQ(plan[base + 10].spec.kind, LayerKind::FirstChannels);
    EXPECT_EQ(plan[base + 10].spec.c_out, plan[base + 10].spec.c_in / 2);
    EXPECT_EQ(plan[base + 11].spec.kind, LayerKind::PixelUnshuffle);
    EXPECT_EQ(plan[base + 11].size, 32u >> b);
  }
  EXPECT_EQ(plan[63].spec.kind, LayerKind::Flatten);
  EXPECT_EQ(plan[64].spec.kind, LayerKind::AOL);
  EXPECT_EQ(plan[64].spec.c_in, 32u * 4);
  EXPECT_EQ(plan[65].spec.kind, LayerKind::FirstChannels);
  EXPECT_EQ(plan[65].spec.c_out, 10u);
}

TEST(Network, RejectsBadSizes) {
  NetworkSpec s = desk(LayerKind::AOL);
  s.input_size = 48;
  EXPECT_THROW(plan_network(s), ConfigError);
  s = desk(LayerKind::AOL);
  s.classes = 1000;
  EXPECT_THROW(plan_network(s), ConfigError);
  s = desk(LayerKind::MaxMin);
  EXPECT_THROW(plan_network(s), ConfigError);
}

TEST(Network, ParameterCountClosedForm) {
  NetworkSpec s;
  s.width = 16;
  EXPECT_EQ(parameter_count(s), 1572288u);
  for (std::size_t w : {4, 16, 32}) {
    s.width = w;
    EXPECT_EQ(parameter_count(s), 6130 * w * w + 188 * w);
  }
  NetworkSpec t;
  t.tiny_imagenet = true;
  t.input_size = 64;
  t.classes = 200;
  t.width = 8;
  EXPECT_EQ(parameter_count(t), 24562u * 64 + 380 * 8);
}

TEST(Network, SizeClasses) {
  const std::vector<std::pair<std::size_t, std::pair<double, double>>> classes{
      {16, {1e6, 2e6}}, {32, {4e6, 8e6}}, {64, {16e6, 32e6}}, {128, {64e6, 128e6}}};
  for (LayerKind kind : {LayerKind::Standard, LayerKind::AOL, LayerKind::CPL, LayerKind::Cayley, LayerKind::SOC,
                         LayerKind::LOT, LayerKind::SLL}) {
    for (const auto& [w, range] : classes) {
      NetworkSpec s;
      s.width = w;
      s.kind = kind;
      const double p = static_cast<double>(parameter_count(s));
      EXPECT_GT(p, range.first) << to_string(kind) << " w=" << w;
      EXPECT_LT(p, range.second) << to_string(kind) << " w=" << w;
    }
  }
}

TEST(Network, BcopUsesKcSquaredPerConv) {
  NetworkSpec std_spec, bcop_spec;
  std_spec.width = bcop_spec.width = 16;
  bcop_spec.kind = LayerKind::BCOP;
  const auto a = plan_network(std_spec), b = plan_network(bcop_spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].spec.kind != LayerKind::Standard) continue;
    const double c = static_cast<double>(a[i].spec.c_in), k = static_cast<double>(a[i].spec.k);
    EXPECT_EQ(static_cast<double>(parameter_count(a[i].spec)), k * k * c * c);
    EXPECT_EQ(static_cast<double>(parameter_count(b[i].spec)), k * c * c);
  }
  EXPECT_LT(parameter_count(bcop_spec), parameter_count(std_spec));
}

TEST(Network, OutputHasClassCount) {
  const Network net = build_network(desk(LayerKind::AOL), 1);
  Rng rng(1);
  const FeatureBatch y = network_forward(net, random_batch(rng, 3, 3, 32, 32));
  EXPECT_EQ(y.batch(), 3u);
  EXPECT_EQ(y.sample_size(), 10u);
}

TEST(Network, ZeroParametersGiveZeroLogits) {
  const NetworkSpec spec = desk(LayerKind::AOL);
  std::vector<std::vector<double>> raw;
  for (const auto& p : plan_network(spec)) raw.emplace_back(parameter_count(p.spec), 0.0);
  const Network net = build_network(spec, raw);
  Rng rng(2);
  const FeatureBatch y = network_forward(net, random_batch(rng, 2, 3, 32, 32));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Network, ZeroInputGivesZeroLogits) {
  for (LayerKind kind : {LayerKind::AOL, LayerKind::SLL, LayerKind::Cayley}) {
    const FeatureBatch y = network_forward(build_network(desk(kind), 3), FeatureBatch(2, 3, 32, 32));
    for (double v : y.values()) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(Network, PermutingBatchPermutesRows) {
  const Network net = build_network(desk(LayerKind::SLL), 4);
  Rng rng(4);
  const FeatureBatch x = random_batch(rng, 3, 3, 32, 32);
  const std::size_t m = x.sample_size();
  std::vector<double> swapped(x.values().begin() + 2 * m, x.values().end());
  swapped.insert(swapped.end(), x.values().begin(), x.values().begin() + 2 * m);
  const FeatureBatch y = network_forward(net, x);
  const FeatureBatch ys = network_forward(net, FeatureBatch({3, 3, 32, 32}, swapped));
  EXPECT_EQ(std::vector<double>(ys.values().begin(), ys.values().begin() + 10),
            std::vector<double>(y.values().begin() + 20, y.values().end()));
  EXPECT_EQ(std::vector<double>(ys.values().begin() + 10, ys.values().end()),
            std::vector<double>(y.values().begin(), y.values().begin() + 20));
}

TEST(Network, OneLayerNetworkIsTheLayer) {
  BuildOptions o;
  o.height = o.width = 4;
  const LayerSpec spec = LayerSpec::make(LayerKind::Cayley, 2, 2, 3);
  const auto layer = build(spec, init_params(spec, 1), o);
  Rng rng(5);
  const FeatureBatch x = random_batch(rng, 2, 2, 4, 4);
  EXPECT_EQ(network_forward({layer}, x).values(), layer->forward(x).values());
}

TEST(Network, DeterministicForSeed) {
  Rng rng(6);
  const FeatureBatch x = random_batch(rng, 2, 3, 32, 32);
  EXPECT_EQ(network_forward(build_network(desk(LayerKind::LOT), 9), x).values(),
            network_forward(build_network(desk(LayerKind::LOT), 9), x).values());
}

TEST(Margin, Examples) {
  const double eps = 36.0 / 255.0;
  const MarginResult r = margin({2.0, 0.5, -1.0}, 0, {eps});
  EXPECT_DOUBLE_EQ(r.margin, 1.5);
  EXPECT_NEAR(certification_threshold(eps), 0.19965, 1e-5);
  EXPECT_TRUE(r.certified_at.at(eps));
  EXPECT_DOUBLE_EQ(margin({2.0, 0.5, -1.0}, 1).margin, -1.5);
  const MarginResult flat = margin({1.0, 1.0, 1.0}, 2, {1e-9, eps});
  EXPECT_EQ(flat.margin, 0.0);
  EXPECT_FALSE(flat.certified_at.at(1e-9));
}

TEST(Margin, CertificationIsStrictlyAboveThreshold) {
  const double eps = 0.5;
  const double t = certification_threshold(eps);
  EXPECT_FALSE(margin({t, 0.0}, 0, {eps}).certified_at.at(eps));
  EXPECT_TRUE(margin({std::nextafter(t, 1e9), 0.0}, 0, {eps}).certified_at.at(eps));
}

TEST(Margin, Errors) {
  EXPECT_THROW(margin({1.0, 2.0}, 2), IndexError);
  EXPECT_THROW(margin({1.0}, 0), ConfigError);
}

TEST(MarginLoss, DegeneratesToCrossEntropy) {
  const FeatureBatch logits({2, 3, 1, 1}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  const double ce0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5)) - 1.0;
  const double ce1 = std::log(std::exp(-1.0) + std::exp(0.0) + std::exp(3.0)) - 3.0;
  EXPECT_NEAR(margin_loss(logits, {0, 2}, 0.0, 1.0), (ce0 + ce1) / 2, 1e-12);
}

TEST(MarginLoss, UniformLogits) {
  EXPECT_NEAR(margin_loss(FeatureBatch(1, 10, 1, 1, 0.3), {4}, 0.0, 1.0), std::log(10.0), 1e-12);
}

TEST(MarginLoss, VanishesAtLowTemperatureWhenSeparated) {
  const FeatureBatch logits({1, 3, 1, 1}, {3.0, 0.0, 1.0});
  const double eps = 0.2;  // offset 2 sqrt(2) eps ~ 0.566 < lead of 2
  EXPECT_LT(margin_loss(logits, {0}, eps, 0.01), 1e-30);
  EXPECT_GT(margin_loss(logits, {0}, eps, 1.0), margin_loss(logits, {0}, eps, 0.25));
  EXPECT_THROW(margin_loss(logits, {0}, eps, 0.0), ConfigError);
}

TEST(CertifiedAccuracy, LimitsAndMonotonicity) {
  const NetworkSpec spec = desk(LayerKind::AOL);
  const Network net = build_network(spec, 7);
  const Dataset data = make_blob_dataset(40, 10, 3, 32, 0.1, 7);
  const FeatureBatch logits = network_forward(net, data.features);
  std::size_t positive = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> row(logits.data() + 10 * i, logits.data() + 10 * (i + 1));
    positive += margin(row, data.labels[i]).margin > 0;
  }
  EXPECT_DOUBLE_EQ(certified_accuracy(net, data, 0.0), static_cast<double>(positive) / 40);
  EXPECT_EQ(certified_accuracy(net, data, std::numeric_limits<double>::infinity()), 0.0);
  const auto acc = certified_accuracy(net, data, {0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0});
  for (std::size_t i = 1; i < acc.size(); ++i) EXPECT_LE(acc[i], acc[i - 1]);
}

TEST(CertifiedAccuracy, LinearToyIsSoundUnderWorstCasePerturbation) {
  // Two-class dense classifier with unit spectral norm.
  for_all(10, 140, [](Rng& rng, std::size_t) {
    const std::size_t d = 6;
    RealMatrix w = testing::random_matrix(rng, 2, d);
    w = w * (1.0 / testing::svd_sigma_max(w));
    BuildOptions o;
    const auto layer = build(LayerSpec::make(LayerKind::Dense, d, 2), w.values(), o);
    const Network net{layer};
    Dataset data;
    data.features = random_batch(rng, 50, d, 1, 1);
    data.labels.resize(50);
    for (auto& l : data.labels) l = static_cast<std::uint32_t>(rng.next() % 2);
    const double eps = 0.2;
    const FeatureBatch logits = network_forward(net, data.features);
    std::size_t certified = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      const std::size_t l = data.labels[i];
      const std::vector<double> row{logits.values()[2 * i], logits.values()[2 * i + 1]};
      if (!(margin(row, l).margin > certification_threshold(eps))) continue;
      ++certified;
      // Steepest margin descent direction: -(w_l - w_other).
      std::vector<double> dir(d);
      double n = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dir[j] = w(1 - l, j) - w(l, j);
        n += dir[j] * dir[j];
      }
      FeatureBatch x({1, d, 1, 1}, std::vector<double>(data.features.data() + i * d, data.features.data() + (i + 1) * d));
      for (std::size_t j = 0; j < d; ++j) x.values()[j] += eps * dir[j] / std::sqrt(n);
      const auto y = layer->forward(x).values();
      EXPECT_GT(y[l], y[1 - l]);
    }
    EXPECT_NEAR(certified_accuracy(net, data, eps), static_cast<double>(certified) / 50, 1e-15);
  });
}

TEST(CertifiedAccuracy, RandomPerturbationsNeverFlipCertifiedSamples) {
  const Network net = build_network(desk(LayerKind::Cayley), 11);
  const Dataset data = make_blob_dataset(6, 10, 3, 32, 0.1, 11);
  const FeatureBatch logits = network_forward(net, data.features);
  Rng rng(12);
  const std::size_t m = data.features.sample_size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> row(logits.data() + 10 * i, logits.data() + 10 * (i + 1));
    const double mg = margin(row, data.labels[i]).margin;
    if (mg <= 0) continue;
    const double eps = 0.99 * mg / std::sqrt(2.0);
    FeatureBatch batch(200, 3, 32, 32);
    for (std::size_t p = 0; p < 200; ++p) {
      const auto dir = rng.unit_vector(m);
      for (std::size_t j = 0; j < m; ++j) batch.values()[p * m + j] = data.features.values()[i * m + j] + eps * dir[j];
    }
    const FeatureBatch out = network_forward(net, batch);
    for (std::size_t p = 0; p < 200; ++p) {
      const std::vector<double> r(out.data() + 10 * p, out.data() + 10 * (p + 1));
      EXPECT_GT(margin(r, data.labels[i]).margin, 0.0);
    }
  }
}

TEST(Dataset, BlobsAndRoundTrip) {
  const Dataset d = make_blob_dataset(12, 4, 2, 8, 0.1, 3);
  EXPECT_EQ(d.size(), 12u);
  EXPECT_EQ(d.labels[5], 1u);
  const auto dir = (std::filesystem::temp_directory_path() / "lipcmp_ds").string();
  save_dataset(dir, d);
  const Dataset e = load_dataset(dir);
  EXPECT_EQ(e.labels, d.labels);
  EXPECT_EQ(e.features.shape(), d.features.shape());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace lipcmp
