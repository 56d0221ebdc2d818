#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipcmp/tensor.hpp"

namespace lipcmp {

// LT1 tensor file: "LIPTENS1", u32 axis count, u32 extents, float32 data,
// all little-endian and row-major.
struct Lt1Array {
  std::vector<std::uint32_t> extents;
  std::vector<float> data;
};

Lt1Array read_lt1(const std::string& path);
void write_lt1(const std::string& path, const Lt1Array& array);

Lt1Array to_lt1(const BasicTensor4<double>& t);
FeatureBatch feature_batch_from_lt1(const Lt1Array& a);
std::vector<double> flat_values(const Lt1Array& a);

std::vector<std::uint32_t> read_u32_file(const std::string& path);
void write_u32_file(const std::string& path, const std::vector<std::uint32_t>& values);

}  // namespace lipcmp
