#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bapolab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bapolab: tabular policy-optimization lab with adaptive clipping"};
  app.require_subcommand(1);

  bapolab::cli::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "run one training config and write metrics CSV");
  train->add_option("--config", train_args.config_path, "config file")->required();
  train->add_option("--out", train_args.out_dir, "output directory (default: $BAPO_LAB_OUT or ./out)");

  bapolab::cli::VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "run the analytic verification suite");
  verify->add_option("--tolerance-profile", verify_args.profile, "default | strict");
  verify->add_option("--trials", verify_args.trials, "sample count for the statistical checks");
  verify->add_option("--out", verify_args.out_dir, "output directory for verify_errors.csv");
  verify->add_flag("--inject-gradient-fault", verify_args.inject_gradient_fault,
                   "test hook: perturb one analytic gradient entry (must fail)");

  bapolab::cli::SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "run a config cross-product over one axis and seeds");
  sweep->add_option("--config", sweep_args.config_path, "base config file")->required();
  sweep->add_option("--axis", sweep_args.axis, "staleness | algorithm | clip_bounds")->required();
  sweep->add_option("--values", sweep_args.values, "axis values")->required()->expected(-1);
  sweep->add_option("--seeds", sweep_args.seeds, "seeds")->required()->expected(-1);
  sweep->add_option("--out", sweep_args.out_dir, "output directory");
  sweep->add_option("--jobs", sweep_args.jobs, "worker pool size");

  bapolab::cli::PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "render a metric column from run CSVs as an SVG chart");
  plot->add_option("csvs", plot_args.csv_paths, "metrics CSV files")->required()->expected(-1);
  plot->add_option("--column", plot_args.column, "metric column to plot")->required();
  plot->add_option("--out", plot_args.out_svg, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bapolab::cli::kExitUsage;
  }

  if (train->parsed()) return bapolab::cli::cmd_train(train_args);
  if (verify->parsed()) return bapolab::cli::cmd_verify(verify_args);
  if (sweep->parsed()) return bapolab::cli::cmd_sweep(sweep_args);
  if (plot->parsed()) return bapolab::cli::cmd_plot(plot_args);
  return bapolab::cli::kExitUsage;
}
