#include "wwtp/nn/container.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace wwtp::nn {

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ContainerFormatError(std::string("truncated container while reading ") + what);
  }
  return to_little(v);
}

constexpr std::uint32_t kMaxName = 4096;
const std::string kParamPrefix = "param/";
const std::string kL2Prefix = "param_l2/";
const std::string kOrderKey = "param_order";

}  // namespace

void write_container(std::ostream& out, const ArrayMap& arrays) {
  out.write(kContainerMagic, sizeof kContainerMagic);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) put<double>(out, m.data()[i]);
    }
  }
  if (!out) throw std::runtime_error("failed writing container");
}

ArrayMap read_container(std::istream& in) {
  char magic[sizeof kContainerMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kContainerMagic, sizeof magic) != 0) {
    throw ContainerFormatError("bad container magic");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kContainerVersion) {
    throw ContainerFormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, "entry count");
  ArrayMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in, "name length");
    if (len > kMaxName) throw ContainerFormatError("entry name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ContainerFormatError("truncated entry name");
    const auto rows = get<std::uint32_t>(in, "rows");
    const auto cols = get<std::uint32_t>(in, "cols");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<double>(in, "payload");
    if (!out.emplace(name, std::move(m)).second) {
      throw ContainerFormatError("duplicate entry '" + name + "'");
    }
  }
  return out;
}

void save_container(const std::filesystem::path& path, const ArrayMap& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_container(out, arrays);
}

ArrayMap load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_container(in);
}

const Matrix& require(const ArrayMap& arrays, const std::string& name) {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ContainerFormatError("missing entry '" + name + "'");
  return it->second;
}

void put_params(ArrayMap& arrays, const ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    arrays[kParamPrefix + params.name(i)] = params.value(i);
    arrays[kL2Prefix + params.name(i)] = Matrix::Constant(1, 1, params.regularized(i) ? 1.0 : 0.0);
  }
  // Registration order, as positions into the sorted name list.
  std::vector<std::string> sorted = params.names();
  std::sort(sorted.begin(), sorted.end());
  Matrix order(1, static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    order(0, static_cast<Eigen::Index>(i)) = static_cast<double>(
        std::lower_bound(sorted.begin(), sorted.end(), params.name(i)) - sorted.begin());
  }
  arrays[kOrderKey] = order;
}

ParamSet get_params(const ArrayMap& arrays) {
  std::vector<std::string> sorted;
  for (const auto& [name, m] : arrays) {
    if (name.rfind(kParamPrefix, 0) == 0) sorted.push_back(name.substr(kParamPrefix.size()));
  }
  const Matrix& order = require(arrays, kOrderKey);
  if (static_cast<std::size_t>(order.size()) != sorted.size()) {
    throw ContainerFormatError("parameter order does not match parameter entries");
  }
  ParamSet p;
  for (Eigen::Index i = 0; i < order.size(); ++i) {
    const auto pos = static_cast<std::size_t>(order(0, i));
    if (pos >= sorted.size()) throw ContainerFormatError("parameter order out of range");
    const auto& name = sorted[pos];
    const bool l2 = require(arrays, kL2Prefix + name)(0, 0) != 0.0;
    p.add(name, require(arrays, kParamPrefix + name), l2);
  }
  return p;
}

}  // namespace wwtp::nn
