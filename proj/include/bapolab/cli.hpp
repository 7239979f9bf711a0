#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bapolab/config.hpp"

namespace bapolab::cli {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // runtime or check failure
inline constexpr int kExitUsage = 2;    // usage or config error

// BAPO_LAB_OUT env var, else "out".
std::string default_out_dir();

// "<algorithm>-s<seed>-<digest prefix>": stable for a resolved config.
std::string run_id_for(const TrainerConfig& config);

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
};
int cmd_train(const TrainArgs& args);

struct VerifyArgs {
  std::string profile = "default";
  int trials = 1000;
  std::string out_dir;
  bool inject_gradient_fault = false;
};
int cmd_verify(const VerifyArgs& args);

struct SweepArgs {
  std::string config_path;
  std::string axis;  // staleness | algorithm | clip_bounds
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int jobs = 1;
};
int cmd_sweep(const SweepArgs& args);

struct PlotArgs {
  std::vector<std::string> csv_paths;
  std::string column;
  std::string out_svg;
};
int cmd_plot(const PlotArgs& args);

}  // namespace bapolab::cli
