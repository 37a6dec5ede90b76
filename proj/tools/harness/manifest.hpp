#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace wwtp::harness {

/// 64-bit FNV-1a, printed as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
std::uint64_t hash_file(const std::filesystem::path& p, std::uint64_t h = 0xcbf29ce484222325ULL);

const char* tool_version();

struct Manifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // relative to the run directory
  std::vector<std::string> failures;
};

/// Writes <dir>/manifest.json. The input hash covers the config snapshot and the bytes of
/// every input file; outputs are hashed individually.
void write_manifest(const std::filesystem::path& dir, const Manifest& m);

}  // namespace wwtp::harness
