#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "wwtp/plant/plant.hpp"

namespace wwtp {

// Binary state checkpoint: magic "WWTPSTAT", u32 version, u32 entry count, per entry a u32
// length-prefixed name, then f64 time and the f64 values. Little-endian throughout.
void write_state_binary(std::ostream& out, const PlantState& s);
PlantState read_state_binary(std::istream& in);

// CSV twin: a header row "time[d],<entry names>" and one value row.
void write_state_csv(std::ostream& out, const PlantState& s);
PlantState read_state_csv(std::istream& in);

/// Writes <stem>.bin and <stem>.csv.
void save_state(const std::filesystem::path& stem, const PlantState& s);
PlantState load_state(const std::filesystem::path& binary_path);

/// Applies overrides from a JSON object. Recognized keys: volume (5 numbers), kla_fixed (4),
/// q_w, q_r, settler_area, layer_height, so_sat, tss_per_cod, kinetics.<name>,
/// settling.<name>. Unknown keys are rejected.
void apply_plant_overrides(PlantParams& params, const nlohmann::json& j);
PlantParams load_plant_params(const std::filesystem::path& path);
nlohmann::json plant_params_to_json(const PlantParams& params);

}  // namespace wwtp
