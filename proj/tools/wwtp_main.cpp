#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "harness/config.hpp"
#include "harness/experiments.hpp"
#include "harness/manifest.hpp"

using namespace wwtp::harness;

int main(int argc, char** argv) {
  CLI::App app{"wwtp: DIOKO economic MPC experiments on the activated sludge benchmark plant"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool paper_scale = false, quiet = false;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "experiment seed (overrides the config)");
  app.add_flag("--paper-scale", paper_scale, "1e5 samples, 400 epochs, 14-day evaluation");
  app.add_option("--out", out_dir, "output root directory (default runs)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  std::string state, dataset, model, dump_qp;
  int seeds = 0;
  auto add_state = [&](CLI::App* c) {
    c->add_option("--state", state, "steady-state checkpoint (.bin)")->check(CLI::ExistingFile);
  };
  auto add_dataset = [&](CLI::App* c) {
    c->add_option("--dataset", dataset, "dataset file from collect")->check(CLI::ExistingFile);
  };
  auto add_model = [&](CLI::App* c) {
    c->add_option("--model", model, "trained model file")->check(CLI::ExistingFile);
  };

  const std::map<std::string, int (*)(Context&)> commands{
      {"settle", cmd_settle},         {"collect", cmd_collect},
      {"train", cmd_train},           {"evaluate", cmd_evaluate},
      {"robustness", cmd_robustness}, {"sensitivity", cmd_sensitivity},
      {"generalize", cmd_generalize},
  };
  std::map<std::string, CLI::App*> subs;
  subs["settle"] = app.add_subcommand("settle", "settle the plant and compare with the reference state");
  subs["collect"] = app.add_subcommand("collect", "collect an excitation dataset");
  subs["train"] = app.add_subcommand("train", "train DIOKO models");
  subs["evaluate"] = app.add_subcommand("evaluate", "closed-loop comparison against baselines");
  subs["robustness"] = app.add_subcommand("robustness", "clean vs noisy operation and training");
  subs["sensitivity"] = app.add_subcommand("sensitivity", "learning-rate and latent-size sweep");
  subs["generalize"] = app.add_subcommand("generalize", "dry-only vs all-weather training");

  for (const auto& name : {"collect", "train", "evaluate", "robustness", "sensitivity", "generalize"}) {
    add_state(subs[name]);
  }
  for (const auto& name : {"train", "evaluate", "robustness", "sensitivity", "generalize"}) {
    add_dataset(subs[name]);
  }
  for (const auto& name : {"evaluate", "robustness", "generalize"}) add_model(subs[name]);
  subs["evaluate"]->add_option("--dump-qp", dump_qp, "write every EMPC QP and its solution here");
  subs["train"]->add_option("--seeds", seeds, "number of seeds (seed, seed+1, ...)")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_config(config_path, paper_scale, [](const char* n) { return std::getenv(n); });
    if (app.count("--seed")) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!state.empty()) cfg.state = state;
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!model.empty()) cfg.model = model;
    if (seeds > 0) cfg.train.seeds = seeds;
    if (!dump_qp.empty()) cfg.empc.dump_dir = dump_qp;
    cfg.validate();

    Context ctx(cfg);
    ctx.quiet = quiet;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) return commands.at(name)(ctx);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
