// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "fastpoint/error.hpp"
#include "fastpoint/pipeline/commands.hpp"
#include "fastpoint/pipeline/config.hpp"

namespace fp = fastpoint::pipeline;

namespace {

using Command = int (*)(const fp::CommandOptions&);

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{
      {"ingest", fp::cmd_ingest},       {"voxelize", fp::cmd_voxelize}, {"targets", fp::cmd_targets},
      {"train-toy", fp::cmd_train_toy}, {"infer", fp::cmd_infer},       {"eval", fp::cmd_eval},
      {"augment", fp::cmd_augment},     {"selftest", fp::cmd_selftest},
  };
  return table;
}

std::filesystem::path default_config() {
  for (const char* p : {"configs/toy.yaml", FASTPOINT_SOURCE_DIR "/configs/toy.yaml"}) {
    if (std::filesystem::exists(p)) return p;
  }
  return "configs/toy.yaml";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fastpoint: two-stage LiDAR car detector"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string checkpoint;
  std::string dets;
  bool skip_refiner = false;

  for (const auto& [name, fn] : commands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "YAML config (default configs/toy.yaml)");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out, "output directory")->capture_default_str();
    if (name == "infer") {
      sub->add_option("--checkpoint", checkpoint, "checkpoint file (default OUT/checkpoint.fpck)");
      sub->add_flag("--skip-refiner", skip_refiner, "emit first-stage boxes only");
    }
    if (name == "eval") sub->add_option("--dets", dets, "detection directory (default OUT/detections)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    fp::CommandOptions opt;
    opt.config = fp::load_config(config_path.empty() ? default_config() : std::filesystem::path(config_path));
    if (seed) opt.config.seed = *seed;
    opt.config.validate();
    opt.out = out;
    opt.log = &std::cout;
    if (!checkpoint.empty()) opt.checkpoint = checkpoint;
    if (!dets.empty()) opt.detections = dets;
    opt.skip_refiner = skip_refiner;
    const std::string name = app.get_subcommands().front()->get_name();
    return commands().at(name)(opt);
  } catch (const std::exception& e) {
    std::cerr << "fastpoint: " << e.what() << "\n";
    return 2;
  }
}
