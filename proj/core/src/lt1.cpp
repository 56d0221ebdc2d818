#include "lipcmp/lt1.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lipcmp {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'P', 'T', 'E', 'N', 'S', '1'};

std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace

Lt1Array read_lt1(const std::string& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw IoError("'" + path + "' is not an LT1 file");
  Lt1Array a;
  const std::uint32_t axes = load_u32(bytes.data() + 8);
  std::size_t pos = 12;
  if (bytes.size() < pos + 4ull * axes) throw IoError("'" + path + "': truncated header");
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < axes; ++i, pos += 4) {
    a.extents.push_back(load_u32(bytes.data() + pos));
    count *= a.extents.back();
  }
  if (bytes.size() != pos + 4 * count)
    throw IoError("'" + path + "': payload size does not match extents");
  a.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, pos += 4)
    a.data[i] = std::bit_cast<float>(load_u32(bytes.data() + pos));
  return a;
}

void write_lt1(const std::string& path, const Lt1Array& a) {
  std::size_t count = 1;
  for (auto e : a.extents) count *= e;
  if (count != a.data.size()) throw ShapeError("write_lt1: extents do not match data");
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  store_u32(out, static_cast<std::uint32_t>(a.extents.size()));
  for (auto e : a.extents) store_u32(out, e);
  for (float v : a.data) store_u32(out, std::bit_cast<std::uint32_t>(v));
  dump(path, out);
}

Lt1Array to_lt1(const BasicTensor4<double>& t) {
  Lt1Array a;
  for (auto e : t.shape()) a.extents.push_back(static_cast<std::uint32_t>(e));
  a.data.assign(t.values().begin(), t.values().end());
  return a;
}

FeatureBatch feature_batch_from_lt1(const Lt1Array& a) {
  if (a.extents.size() != 4) throw ShapeError("LT1 feature batch must have 4 axes");
  return FeatureBatch({a.extents[0], a.extents[1], a.extents[2], a.extents[3]}, flat_values(a));
}

std::vector<double> flat_values(const Lt1Array& a) { return {a.data.begin(), a.data.end()}; }

std::vector<std::uint32_t> read_u32_file(const std::string& path) {
  const auto bytes = slurp(path);
  if (bytes.size() % 4 != 0) throw IoError("'" + path + "': size is not a multiple of 4");
  std::vector<std::uint32_t> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = load_u32(bytes.data() + 4 * i);
  return v;
}

void write_u32_file(const std::string& path, const std::vector<std::uint32_t>& values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 4);
  for (auto v : values) store_u32(out, v);
  dump(path, out);
}

}  // namespace lipcmp
