#include "harness/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#ifndef WWTP_VERSION
#define WWTP_VERSION "0.0.0"
#endif

namespace wwtp::harness {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_file(const std::filesystem::path& p, std::uint64_t h) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

const char* tool_version() { return WWTP_VERSION; }

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json j;
  j["tool"] = "wwtp";
  j["version"] = tool_version();
  j["command"] = m.command;
  j["config"] = m.config;
  j["seeds"] = m.seeds;

  std::uint64_t h = fnv1a(m.config.dump());
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : m.inputs) {
    const auto fh = hash_file(p);
    h = fnv1a(hex64(fh), h);
    inputs.push_back({{"path", p.string()}, {"hash", hex64(fh)}});
  }
  j["inputs"] = inputs;
  j["input_hash"] = hex64(h);

  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& p : m.outputs) {
    outputs.push_back({{"path", p.generic_string()}, {"hash", hex64(hash_file(dir / p))}});
  }
  j["outputs"] = outputs;
  j["failures"] = m.failures;

  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

}  // namespace wwtp::harness
