#include "harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "wwtp/plant/io.hpp"

namespace wwtp::harness {

using nlohmann::json;

namespace {

json weathers_json(const std::vector<influent::Weather>& ws) {
  json a = json::array();
  for (auto w : ws) a.push_back(influent::to_string(w));
  return a;
}

std::vector<influent::Weather> weathers_from(const json& j) {
  std::vector<influent::Weather> out;
  for (const auto& v : j) out.push_back(influent::weather_from_string(v.get<std::string>()));
  return out;
}

void overlay(json& cur, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
  for (const auto& [key, val] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!cur.contains(key)) throw std::invalid_argument("config: unknown key '" + where + "'");
    if (where == "plant") {
      // validated against PlantParams below
      cur[key].merge_patch(val);
    } else if (cur[key].is_object()) {
      overlay(cur[key], val, where);
    } else {
      cur[key] = val;
    }
  }
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.paper_scale = j.at("paper_scale").get<bool>();
  c.threads = j.at("threads").get<int>();
  c.out = j.at("out").get<std::string>();
  c.state = j.at("state").get<std::string>();
  c.dataset = j.at("dataset").get<std::string>();
  c.model = j.at("model").get<std::string>();
  c.weather_dir = j.at("weather_dir").get<std::string>();
  c.plant = j.at("plant");

  const auto& co = j.at("collect");
  c.collect.n_samples = co.at("n_samples").get<std::size_t>();
  c.collect.episode_days = co.at("episode_days").get<double>();
  c.collect.weathers = weathers_from(co.at("weathers"));
  c.collect.excitation_hold = co.at("excitation_hold").get<std::size_t>();
  c.collect.excitation_noise = co.at("excitation_noise").get<double>();

  const auto& tr = j.at("train");
  c.train.epochs = tr.at("epochs").get<int>();
  c.train.batch = tr.at("batch").get<int>();
  c.train.lr = tr.at("lr").get<double>();
  c.train.l2 = tr.at("l2").get<double>();
  c.train.latent = tr.at("latent").get<int>();
  c.train.hidden = tr.at("hidden").get<std::vector<int>>();
  c.train.horizon = tr.at("horizon").get<int>();
  c.train.seeds = tr.at("seeds").get<int>();

  const auto& ev = j.at("evaluate");
  c.evaluate.days = ev.at("days").get<double>();
  c.evaluate.weathers = weathers_from(ev.at("weathers"));
  c.evaluate.weather_seed = ev.at("weather_seed").get<std::uint64_t>();
  c.evaluate.random_seed = ev.at("random_seed").get<std::uint64_t>();

  const auto& em = j.at("empc");
  c.empc.horizon = em.at("horizon").get<int>();
  c.empc.R = em.at("R").get<std::array<double, 2>>();
  c.empc.penalize_boundary_move = em.at("penalize_boundary_move").get<bool>();
  c.empc.tol = em.at("tol").get<double>();
  c.empc.max_iter = em.at("max_iter").get<int>();
  c.empc.dump_dir = em.at("dump_dir").get<std::string>();

  const auto& no = j.at("noise");
  c.noise.enabled = no.at("enabled").get<bool>();
  c.noise.process_rel = no.at("process_rel").get<double>();
  c.noise.measurement_rel = no.at("measurement_rel").get<double>();
  c.noise.seed = no.at("seed").get<std::uint64_t>();

  const auto& se = j.at("sensitivity");
  c.sensitivity.lr = se.at("lr").get<std::vector<double>>();
  c.sensitivity.latent = se.at("latent").get<std::vector<int>>();
  return c;
}

void leaves(const json& j, std::vector<std::string>& path,
            const std::function<void(const std::vector<std::string>&, const json&)>& fn) {
  for (const auto& [key, val] : j.items()) {
    path.push_back(key);
    if (val.is_object() && !val.empty()) {
      leaves(val, path, fn);
    } else if (!val.is_object()) {
      fn(path, val);
    }
    path.pop_back();
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["paper_scale"] = c.paper_scale;
  j["threads"] = c.threads;
  j["out"] = c.out.string();
  j["state"] = c.state.string();
  j["dataset"] = c.dataset.string();
  j["model"] = c.model.string();
  j["weather_dir"] = c.weather_dir.string();
  j["plant"] = c.plant;
  j["collect"] = {{"n_samples", c.collect.n_samples},
                  {"episode_days", c.collect.episode_days},
                  {"weathers", weathers_json(c.collect.weathers)},
                  {"excitation_hold", c.collect.excitation_hold},
                  {"excitation_noise", c.collect.excitation_noise}};
  j["train"] = {{"epochs", c.train.epochs}, {"batch", c.train.batch},   {"lr", c.train.lr},
                {"l2", c.train.l2},         {"latent", c.train.latent}, {"hidden", c.train.hidden},
                {"horizon", c.train.horizon}, {"seeds", c.train.seeds}};
  j["evaluate"] = {{"days", c.evaluate.days},
                   {"weathers", weathers_json(c.evaluate.weathers)},
                   {"weather_seed", c.evaluate.weather_seed},
                   {"random_seed", c.evaluate.random_seed}};
  j["empc"] = {{"horizon", c.empc.horizon},
               {"R", c.empc.R},
               {"penalize_boundary_move", c.empc.penalize_boundary_move},
               {"tol", c.empc.tol},
               {"max_iter", c.empc.max_iter},
               {"dump_dir", c.empc.dump_dir}};
  j["noise"] = {{"enabled", c.noise.enabled},
                {"process_rel", c.noise.process_rel},
                {"measurement_rel", c.noise.measurement_rel},
                {"seed", c.noise.seed}};
  j["sensitivity"] = {{"lr", c.sensitivity.lr}, {"latent", c.sensitivity.latent}};
  return j;
}

void merge_json(ExperimentConfig& c, const json& patch) {
  json cur = to_json(c);
  overlay(cur, patch, "");
  c = from_json(cur);
  c.validate();
}

void ExperimentConfig::apply_paper_scale() {
  paper_scale = true;
  collect.n_samples = 100000;
  train.epochs = 400;
  evaluate.days = 14.0;
}

void ExperimentConfig::validate() const {
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (collect.n_samples < 10) throw std::invalid_argument("config: collect.n_samples too small");
  if (collect.episode_days <= 0.0) throw std::invalid_argument("config: collect.episode_days must be > 0");
  if (collect.weathers.empty()) throw std::invalid_argument("config: collect.weathers is empty");
  if (collect.excitation_hold < 1) throw std::invalid_argument("config: collect.excitation_hold must be >= 1");
  if (train.epochs < 0 || train.batch < 1 || train.lr < 0.0 || train.l2 < 0.0) {
    throw std::invalid_argument("config: bad train settings");
  }
  if (train.latent < 1 || train.horizon < 1 || train.seeds < 1) {
    throw std::invalid_argument("config: train.latent, train.horizon, train.seeds must be >= 1");
  }
  if (evaluate.days <= 0.0 || evaluate.weathers.empty()) {
    throw std::invalid_argument("config: bad evaluate settings");
  }
  if (empc.horizon < 1 || empc.R[0] < 0.0 || empc.R[1] < 0.0) {
    throw std::invalid_argument("config: empc.horizon must be >= 1 and R >= 0");
  }
  PlantParams p;
  apply_plant_overrides(p, plant);
  p.validate();
}

std::vector<std::string> apply_env(ExperimentConfig& c,
                                   const std::function<const char*(const char*)>& getenv) {
  json cur = to_json(c);
  std::vector<std::string> used;
  std::vector<std::string> path;
  json patch = json::object();
  leaves(cur, path, [&](const std::vector<std::string>& p, const json& leaf) {
    std::string name = kEnvPrefix;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) name += '_';
      for (char ch : p[i]) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    const char* raw = getenv(name.c_str());
    if (!raw) return;
    json v;
    if (leaf.is_string()) {
      v = std::string(raw);
    } else {
      v = json::parse(raw, nullptr, false);
      if (v.is_discarded()) v = std::string(raw);
    }
    json* node = &patch;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) node = &(*node)[p[i]];
    (*node)[p.back()] = v;
    used.push_back(name);
  });
  if (!used.empty()) {
    try {
      merge_json(c, patch);
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("environment override: ") + e.what());
    }
  }
  return used;
}

ExperimentConfig load_config(const std::filesystem::path& file, bool paper_scale,
                             const std::function<const char*(const char*)>& getenv) {
  ExperimentConfig c;
  if (paper_scale) c.apply_paper_scale();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config " + file.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config " + file.string() + ": " + e.what());
    }
    try {
      merge_json(c, j);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config " + file.string() + ": " + e.what());
    }
  }
  if (getenv) apply_env(c, getenv);
  c.validate();
  return c;
}

}  // namespace wwtp::harness
