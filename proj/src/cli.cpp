#include "bapolab/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "bapolab/error.hpp"
#include "bapolab/metrics.hpp"
#include "bapolab/svg.hpp"
#include "bapolab/trainer.hpp"
#include "bapolab/verify.hpp"

namespace bapolab::cli {

namespace fs = std::filesystem;

std::string default_out_dir() {
  const char* env = std::getenv("BAPO_LAB_OUT");
  return env && *env ? env : "out";
}

std::string run_id_for(const TrainerConfig& config) {
  const ConfigDoc doc = to_doc(config);
  return msg(to_string(config.algorithm), "-s", config.seed, "-", doc.digest_hex().substr(0, 8));
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError(msg("cannot open ", path.string(), " for writing"));
  out << content;
}

struct CellResult {
  std::string value;
  std::uint64_t seed = 0;
  std::string run_id;
  bool ok = false;
  std::string error;
  double terminal_entropy = 0.0;
  double terminal_reward = 0.0;
  double mean_entropy = 0.0;
};

// Runs one resolved config and writes <run_id>.csv and <run_id>.manifest.
CellResult execute_run(const TrainerConfig& config, const fs::path& out_dir) {
  CellResult cell;
  cell.seed = config.seed;
  cell.run_id = run_id_for(config);
  const RunResult result = run(config);
  if (result.rows.empty()) throw NumericError("run produced no metrics rows");

  const fs::path csv_path = out_dir / (cell.run_id + ".csv");
  write_metrics_csv(csv_path.string(), result.rows);

  const ConfigDoc doc = to_doc(config);
  nlohmann::json manifest;
  manifest["run_id"] = cell.run_id;
  manifest["config_digest"] = doc.digest_hex();
  manifest["config"] = doc.serialize();
  manifest["csv_path"] = csv_path.string();
  manifest["created_utc"] = utc_now();
  manifest["rows"] = result.rows.size();
  // Both reuse-count conventions, since "staleness E" is reported either way.
  manifest["staleness_epochs"] = config.staleness_epochs;
  manifest["updates_per_batch"] = config.staleness_epochs + 1;
  write_file(out_dir / (cell.run_id + ".manifest"), manifest.dump(2) + "\n");

  cell.ok = true;
  cell.terminal_entropy = result.rows.back().policy_entropy;
  cell.terminal_reward = result.rows.back().mean_reward;
  double sum = 0.0;
  for (const auto& row : result.rows) sum += row.policy_entropy;
  cell.mean_entropy = sum / static_cast<double>(result.rows.size());
  return cell;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  TrainerConfig config;
  try {
    config = resolve_config(ConfigDoc::parse_file(args.config_path));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    const fs::path out_dir = args.out_dir.empty() ? default_out_dir() : args.out_dir;
    fs::create_directories(out_dir);
    const CellResult cell = execute_run(config, out_dir);
    std::cout << "run " << cell.run_id << ": terminal_entropy=" << cell.terminal_entropy
              << " terminal_reward=" << cell.terminal_reward << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "train failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_verify(const VerifyArgs& args) {
  verify::VerifyOptions options;
  try {
    options.tolerance_scale = verify::tolerance_scale_for_profile(args.profile);
    if (args.trials < 1) throw DomainError(msg("--trials must be >= 1, got ", args.trials));
  } catch (const std::exception& e) {
    std::cerr << "verify usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  options.trials = args.trials;
  options.inject_gradient_fault = args.inject_gradient_fault;
  try {
    const auto results = verify::run_all_checks(options);
    std::cout << verify::results_table(results);
    const fs::path out_dir = args.out_dir.empty() ? default_out_dir() : args.out_dir;
    fs::create_directories(out_dir);
    write_file(out_dir / "verify_errors.csv", verify::results_csv(results));
    if (verify::all_passed(results)) return kExitOk;
    std::cerr << "failed checks:";
    for (const auto& r : results)
      if (!r.passed) std::cerr << ' ' << r.name << " (worst=" << r.worst << ")";
    std::cerr << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "verify failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_sweep(const SweepArgs& args) {
  ConfigDoc base;
  try {
    base = ConfigDoc::parse_file(args.config_path);
    resolve_config(base);  // base config must be valid on its own
    if (args.seeds.empty()) throw DomainError("sweep needs at least one seed");
    if (args.values.empty()) throw DomainError("sweep needs at least one axis value");
    if (args.axis != "staleness" && args.axis != "algorithm" && args.axis != "clip_bounds")
      throw DomainError(msg("unknown sweep axis '", args.axis,
                            "' (expected staleness, algorithm, or clip_bounds)"));
    if (args.jobs < 1) throw DomainError("--jobs must be >= 1");
  } catch (const std::exception& e) {
    std::cerr << "sweep config error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path out_dir = args.out_dir.empty() ? default_out_dir() : args.out_dir;
  fs::create_directories(out_dir);

  struct Cell {
    std::string value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& value : args.values)
    for (std::uint64_t seed : args.seeds) cells.push_back({value, seed});

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      CellResult& out = results[i];
      out.value = cell.value;
      out.seed = cell.seed;
      try {
        ConfigDoc doc = base;
        if (args.axis == "staleness")
          doc.set("rollout.staleness_epochs", cell.value);
        else if (args.axis == "algorithm")
          doc.set("trainer.algorithm", cell.value);
        else
          doc.set("trainer.fixed_bounds", cell.value);
        doc.set("trainer.seed", std::to_string(cell.seed));
        out = execute_run(resolve_config(doc), out_dir);
        out.value = cell.value;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  const int jobs = std::min<int>(args.jobs, static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream summary;
  summary << "axis,value,seed,run_id,status,terminal_entropy,terminal_reward,mean_entropy\n";
  bool any_failed = false;
  for (const auto& r : results) {
    summary << args.axis << ',' << r.value << ',' << r.seed << ',' << r.run_id << ','
            << (r.ok ? "ok" : "failed") << ',' << format_double(r.terminal_entropy) << ','
            << format_double(r.terminal_reward) << ',' << format_double(r.mean_entropy) << '\n';
    if (!r.ok) {
      any_failed = true;
      std::cerr << "cell (" << r.value << ", seed " << r.seed << ") failed: " << r.error << '\n';
    }
  }
  try {
    write_file(out_dir / "summary.csv", summary.str());
  } catch (const std::exception& e) {
    std::cerr << "sweep failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cout << "sweep wrote " << results.size() << " cells to " << out_dir.string() << '\n';
  return any_failed ? kExitRuntime : kExitOk;
}

int cmd_plot(const PlotArgs& args) {
  if (args.csv_paths.empty() || args.column.empty() || args.out_svg.empty()) {
    std::cerr << "plot usage error: need CSV paths, --column, and --out\n";
    return kExitUsage;
  }
  std::vector<ChartSeries> series;
  for (const auto& path : args.csv_paths) {
    CsvTable table;
    try {
      table = read_csv(path);
    } catch (const std::exception& e) {
      std::cerr << "plot failed: " << e.what() << '\n';
      return kExitRuntime;
    }
    const int col = table.column_index(args.column);
    if (col < 0) {
      std::cerr << "unknown column '" << args.column << "' in " << path << "; available:";
      for (const auto& c : table.columns) std::cerr << ' ' << c;
      std::cerr << '\n';
      return kExitUsage;
    }
    const int step_col = table.column_index("step");
    ChartSeries s;
    s.label = fs::path(path).stem().string();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      s.x.push_back(step_col >= 0 ? table.rows[i][static_cast<std::size_t>(step_col)]
                                  : static_cast<double>(i));
      s.y.push_back(table.rows[i][static_cast<std::size_t>(col)]);
    }
    series.push_back(std::move(s));
  }
  try {
    write_file(args.out_svg, render_line_chart(series, "step", args.column));
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "plot failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace bapolab::cli
