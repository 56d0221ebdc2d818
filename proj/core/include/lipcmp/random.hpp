#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lipcmp {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next() { return engine_(); }

  std::vector<double> normal_vector(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * normal();
    return v;
  }

  std::vector<double> unit_vector(std::size_t n) {
    for (;;) {
      auto v = normal_vector(n);
      double s = 0.0;
      for (double x : v) s += x * x;
      if (s > 0.0) {
        const double inv = 1.0 / std::sqrt(s);
        for (auto& x : v) x *= inv;
        return v;
      }
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lipcmp
