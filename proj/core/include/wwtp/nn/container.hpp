#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "wwtp/nn/autodiff.hpp"

namespace wwtp::nn {

// Named-array file: magic "WWTPARR\0", u32 version, u32 count, then per entry
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 column-major.
// All integers and doubles little-endian.
inline constexpr char kContainerMagic[8] = {'W', 'W', 'T', 'P', 'A', 'R', 'R', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

class ContainerFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered by name.
using ArrayMap = std::map<std::string, Matrix>;

void write_container(std::ostream& out, const ArrayMap& arrays);
ArrayMap read_container(std::istream& in);
void save_container(const std::filesystem::path& path, const ArrayMap& arrays);
ArrayMap load_container(const std::filesystem::path& path);

const Matrix& require(const ArrayMap& arrays, const std::string& name);

/// Parameters as "param/<name>" entries; regularization flags as "param_l2/<name>".
void put_params(ArrayMap& arrays, const ParamSet& params);
ParamSet get_params(const ArrayMap& arrays);

}  // namespace wwtp::nn
