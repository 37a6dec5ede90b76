#include "wwtp/plant/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace wwtp {

namespace {

constexpr char kMagic[8] = {'W', 'W', 'T', 'P', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "state checkpoints assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("truncated state checkpoint");
  }
  return v;
}

struct Field {
  const char* key;
  double Asm1Kinetics::*member;
};

constexpr Field kKineticFields[] = {
    {"mu_h", &Asm1Kinetics::mu_h}, {"k_s", &Asm1Kinetics::k_s},     {"k_oh", &Asm1Kinetics::k_oh},
    {"k_no", &Asm1Kinetics::k_no}, {"b_h", &Asm1Kinetics::b_h},     {"eta_g", &Asm1Kinetics::eta_g},
    {"eta_h", &Asm1Kinetics::eta_h}, {"k_h", &Asm1Kinetics::k_h},   {"k_x", &Asm1Kinetics::k_x},
    {"mu_a", &Asm1Kinetics::mu_a}, {"k_nh", &Asm1Kinetics::k_nh},   {"b_a", &Asm1Kinetics::b_a},
    {"k_oa", &Asm1Kinetics::k_oa}, {"k_a", &Asm1Kinetics::k_a},     {"y_h", &Asm1Kinetics::y_h},
    {"y_a", &Asm1Kinetics::y_a},   {"f_p", &Asm1Kinetics::f_p},     {"i_xb", &Asm1Kinetics::i_xb},
    {"i_xp", &Asm1Kinetics::i_xp},
};

struct SettlingField {
  const char* key;
  double TakacsSettling::*member;
};

constexpr SettlingField kSettlingFields[] = {
    {"v0_max", &TakacsSettling::v0_max}, {"v0", &TakacsSettling::v0},
    {"r_h", &TakacsSettling::r_h},       {"r_p", &TakacsSettling::r_p},
    {"f_ns", &TakacsSettling::f_ns},     {"x_t", &TakacsSettling::x_t},
};

template <std::size_t N>
void read_array(const nlohmann::json& j, const char* key, std::array<double, N>& dst) {
  if (!j.is_array() || j.size() != N) {
    throw std::invalid_argument(std::string("plant config: '") + key + "' needs " +
                                std::to_string(N) + " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) dst[i] = j[i].get<double>();
}

}  // namespace

void write_state_binary(std::ostream& out, const PlantState& s) {
  const auto names = state_entry_names();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kStateDim));
  for (const auto& n : names) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(n.size()));
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  put<double>(out, s.time());
  for (double v : s.values()) put<double>(out, v);
  if (!out) throw std::runtime_error("failed writing state checkpoint");
}

PlantState read_state_binary(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a state checkpoint (bad magic)");
  }
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported state version");
  if (get<std::uint32_t>(in) != kStateDim) throw std::runtime_error("state checkpoint size mismatch");
  const auto names = state_entry_names();
  for (std::size_t i = 0; i < kStateDim; ++i) {
    std::string n(get<std::uint32_t>(in), '\0');
    if (!in.read(n.data(), static_cast<std::streamsize>(n.size())) || n != names[i]) {
      throw std::runtime_error("state checkpoint entry " + std::to_string(i) + " is not " +
                               names[i]);
    }
  }
  PlantState s;
  s.set_time(get<double>(in));
  for (auto& v : s.values()) v = get<double>(in);
  return s;
}

void write_state_csv(std::ostream& out, const PlantState& s) {
  out << "time[d]";
  for (const auto& n : state_entry_names()) out << ',' << n;
  out << '\n' << std::setprecision(17) << s.time();
  for (double v : s.values()) out << ',' << v;
  out << '\n';
}

PlantState read_state_csv(std::istream& in) {
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row)) {
    throw std::runtime_error("state CSV needs a header and a value row");
  }
  std::istringstream fields(row);
  std::string tok;
  std::vector<double> vals;
  while (std::getline(fields, tok, ',')) vals.push_back(std::stod(tok));
  if (vals.size() != kStateDim + 1) throw std::runtime_error("state CSV has wrong column count");
  PlantState s;
  s.set_time(vals[0]);
  std::copy(vals.begin() + 1, vals.end(), s.values().begin());
  return s;
}

void save_state(const std::filesystem::path& stem, const PlantState& s) {
  auto bin = stem, csv = stem;
  bin += ".bin";
  csv += ".csv";
  std::ofstream b(bin, std::ios::binary), c(csv);
  if (!b || !c) throw std::runtime_error("cannot write state checkpoint " + stem.string());
  write_state_binary(b, s);
  write_state_csv(c, s);
}

PlantState load_state(const std::filesystem::path& binary_path) {
  std::ifstream in(binary_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + binary_path.string());
  return read_state_binary(in);
}

void apply_plant_overrides(PlantParams& p, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("plant config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "volume") {
      read_array(val, "volume", p.volume);
    } else if (key == "kla_fixed") {
      read_array(val, "kla_fixed", p.kla_fixed);
    } else if (key == "q_w") {
      p.q_w = val.get<double>();
    } else if (key == "q_r") {
      p.q_r = val.get<double>();
    } else if (key == "settler_area") {
      p.settler_area = val.get<double>();
    } else if (key == "layer_height") {
      p.layer_height = val.get<double>();
    } else if (key == "so_sat") {
      p.so_sat = val.get<double>();
    } else if (key == "tss_per_cod") {
      p.tss_per_cod = val.get<double>();
    } else if (key == "kinetics") {
      for (const auto& [k, v] : val.items()) {
        bool found = false;
        for (const auto& f : kKineticFields) {
          if (k == f.key) {
            p.kin.*f.member = v.get<double>();
            found = true;
          }
        }
        if (!found) throw std::invalid_argument("plant config: unknown kinetics key '" + k + "'");
      }
    } else if (key == "settling") {
      for (const auto& [k, v] : val.items()) {
        bool found = false;
        for (const auto& f : kSettlingFields) {
          if (k == f.key) {
            p.settling.*f.member = v.get<double>();
            found = true;
          }
        }
        if (!found) throw std::invalid_argument("plant config: unknown settling key '" + k + "'");
      }
    } else {
      throw std::invalid_argument("plant config: unknown key '" + key + "'");
    }
  }
  p.validate();
}

PlantParams load_plant_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plant config " + path.string());
  PlantParams p;
  apply_plant_overrides(p, nlohmann::json::parse(in));
  return p;
}

nlohmann::json plant_params_to_json(const PlantParams& p) {
  nlohmann::json j;
  j["volume"] = p.volume;
  j["kla_fixed"] = p.kla_fixed;
  j["q_w"] = p.q_w;
  j["q_r"] = p.q_r;
  j["settler_area"] = p.settler_area;
  j["layer_height"] = p.layer_height;
  j["so_sat"] = p.so_sat;
  j["tss_per_cod"] = p.tss_per_cod;
  for (const auto& f : kKineticFields) j["kinetics"][f.key] = p.kin.*f.member;
  for (const auto& f : kSettlingFields) j["settling"][f.key] = p.settling.*f.member;
  return j;
}

}  // namespace wwtp
