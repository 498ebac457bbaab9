#include "cdmpo/run.hpp"

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cdmpo/checkpoint.hpp"
#include "cdmpo/evaluation.hpp"
#include "cdmpo/plot.hpp"
#include "cdmpo/simd/kernels.hpp"

namespace cdmpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string run_name(const TrainerConfig& cfg) {
  return cfg.env + "-" + to_string(cfg.variant) + "-seed" + std::to_string(cfg.seed);
}

fs::path resolve_output_dir(const std::optional<std::string>& out_flag, const TrainerConfig& cfg) {
  if (out_flag && !out_flag->empty()) return *out_flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / run_name(cfg);
  }
  return fs::path("runs") / run_name(cfg);
}

Trainer train_to_directory(const TrainerConfig& cfg, const fs::path& dir) {
  make_dirs(dir / "checkpoints");
  json manifest = {{"command", "train"},
                   {"run", run_name(cfg)},
                   {"started_at", utc_now()},
                   {"simd", simd::isa_name(simd::active_isa())},
                   {"metrics_schema_version", kMetricsSchemaVersion}};
  write_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::ofstream metrics = open_output(dir / "metrics.jsonl");
  std::ofstream episodes = open_output(dir / "episodes.jsonl");

  Trainer trainer(cfg);
  try {
    trainer.run(
        [&](const IterationMetrics& m) {
          metrics << to_json(m, cfg.cost_limit).dump() << '\n';
          metrics.flush();
          if (cfg.checkpoint_interval > 0 && (m.iteration + 1) % cfg.checkpoint_interval == 0) {
            std::ostringstream name;
            name << "iter_" << std::setw(6) << std::setfill('0') << m.iteration + 1 << ".ckpt";
            save_checkpoint(dir / "checkpoints" / name.str(), trainer.make_checkpoint());
          }
        },
        [&](const EpisodeRecord& e) { episodes << to_json(e).dump() << '\n'; });
    episodes.flush();
    if (!metrics || !episodes) throw IoError("failed writing run logs under " + dir.string());
    save_checkpoint(dir / "checkpoints" / "final.ckpt", trainer.make_checkpoint());
  } catch (const std::exception& e) {
    manifest["finished_at"] = utc_now();
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
  manifest["finished_at"] = utc_now();
  manifest["status"] = "ok";
  manifest["env_steps"] = trainer.env_steps();
  manifest["episodes"] = trainer.episodes().size();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return trainer;
}

std::vector<EpisodeRecord> read_episode_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read episode log " + path.string());
  std::vector<EpisodeRecord> log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      log.push_back(episode_from_json(json::parse(line)));
    } catch (const json::exception&) {
      throw IoError("malformed episode record in " + path.string());
    }
  }
  return log;
}

// ------------------------------------------------------------------ ablation

AblationGrid read_ablation_grid(const fs::path& path) {
  const json tree = read_json_file(path);
  AblationGrid grid;
  try {
    const json& base = tree.at("base");
    if (base.is_string()) {
      grid.base = read_json_file(path.parent_path() / base.get<std::string>());
    } else if (base.is_object()) {
      grid.base = base;
    } else {
      throw ConfigError("ablation 'base' must be a config object or a path");
    }
    grid.seeds = tree.at("seeds").get<std::vector<std::uint64_t>>();
    for (const json& v : tree.at("variants")) {
      AblationVariant variant;
      variant.name = v.at("name").get<std::string>();
      if (v.contains("overrides")) {
        for (const auto& [key, value] : v.at("overrides").items()) variant.overrides.push_back(key + "=" + value.dump());
      }
      grid.variants.push_back(std::move(variant));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed ablation grid: ") + e.what());
  }
  if (grid.seeds.empty() || grid.variants.empty()) throw ConfigError("ablation grid needs seeds and variants");
  for (const auto& v : grid.variants) {
    const bool ok = !v.name.empty() && std::all_of(v.name.begin(), v.name.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    });
    if (!ok) throw ConfigError("variant name '" + v.name + "' must use letters, digits, '-', '_' or '.'");
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const fs::path& root, std::size_t jobs) {
  struct Task {
    std::size_t variant;
    std::size_t seed;
    TrainerConfig cfg;
    fs::path dir;
    std::string error;
  };
  std::vector<Task> tasks;
  for (std::size_t v = 0; v < grid.variants.size(); ++v) {
    for (std::size_t s = 0; s < grid.seeds.size(); ++s) {
      json tree = grid.base;
      for (const auto& o : grid.variants[v].overrides) apply_override(tree, o);
      apply_override(tree, "seed=" + std::to_string(grid.seeds[s]));
      tree.erase("output_dir");
      const fs::path dir = root / grid.variants[v].name / ("seed" + std::to_string(grid.seeds[s]));
      tasks.push_back({v, s, config_from_json(tree), dir, {}});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        train_to_directory(tasks[i].cfg, tasks[i].dir);
      } catch (const std::exception& e) {
        tasks[i].error = e.what();
        if (tasks[i].error.empty()) tasks[i].error = "failed";
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::max<std::size_t>(jobs, 1); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < grid.variants.size(); ++v) {
    AblationRow row;
    row.variant = grid.variants[v].name;
    double ret = 0.0;
    double cost = 0.0;
    std::size_t finished = 0;
    for (const Task& t : tasks) {
      if (t.variant != v) continue;
      row.seeds.push_back(grid.seeds[t.seed]);
      if (!t.error.empty()) {
        row.error += (row.error.empty() ? "" : "; ") + ("seed " + std::to_string(grid.seeds[t.seed]) + ": " + t.error);
        row.violations.push_back(0);
        continue;
      }
      const std::size_t count = count_violations(read_episode_log(t.dir / "episodes.jsonl"), t.cfg.cost_limit);
      row.violations.push_back(count);
      row.total_violations += count;
      const std::vector<json> metrics = read_metrics(t.dir / "metrics.jsonl");
      const json& last = metrics.back();
      if (last.at("window_return").is_number()) ret += last.at("window_return").get<double>();
      if (last.at("window_cost").is_number()) cost += last.at("window_cost").get<double>();
      ++finished;
    }
    if (finished > 0) {
      row.final_return = ret / static_cast<double>(finished);
      row.final_cost = cost / static_cast<double>(finished);
    }
    rows.push_back(std::move(row));
  }
  write_text(root / "table.json", ablation_table_json(rows).dump(2) + "\n");
  write_text(root / "table.md", ablation_table_markdown(rows));
  return rows;
}

json ablation_table_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const AblationRow& r : rows) {
    json j = {{"variant", r.variant},
              {"seeds", r.seeds},
              {"violations", r.violations},
              {"total_violations", r.total_violations},
              {"final_return", r.final_return},
              {"final_cost", r.final_cost}};
    if (!r.error.empty()) j["error"] = r.error;
    out.push_back(std::move(j));
  }
  return out;
}

std::string ablation_table_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream md;
  md << "| variant | violations per seed | total violations | final return | final cost | status |\n";
  md << "|---|---|---|---|---|---|\n";
  md << std::setprecision(4);
  for (const AblationRow& r : rows) {
    md << "| " << r.variant << " | ";
    for (std::size_t i = 0; i < r.violations.size(); ++i) md << (i ? ", " : "") << r.violations[i];
    md << " | " << r.total_violations << " | " << r.final_return << " | " << r.final_cost << " | "
       << (r.error.empty() ? "ok" : "failed: " + r.error) << " |\n";
  }
  return md.str();
}

// ----------------------------------------------------------------------- CLI

namespace {

int cmd_train(const std::string& config, const std::vector<std::string>& overrides, const std::optional<std::string>& out_dir,
              const std::optional<std::uint64_t>& seed, std::ostream& out) {
  std::vector<std::string> all = overrides;
  if (seed) all.push_back("seed=" + std::to_string(*seed));
  const TrainerConfig cfg = load_config(config, all);
  const fs::path dir = resolve_output_dir(out_dir, cfg);
  const Trainer t = train_to_directory(cfg, dir);
  out << "trained " << run_name(cfg) << ": " << t.env_steps() << " steps, " << t.episodes().size()
      << " episodes, " << count_violations(t.episodes(), cfg.cost_limit) << " violations -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes, const std::optional<std::uint64_t>& seed,
             const std::optional<std::string>& out_dir, std::ostream& out) {
  const Trainer t = Trainer::from_checkpoint(load_checkpoint(checkpoint));
  const TrainerConfig& cfg = t.config();
  EnvFactory factory = [&cfg](std::uint64_t s) { return make_environment(cfg, s); };
  const EvalSummary summary = evaluate(t.policy(), t.c_critic(), factory, episodes, cfg, seed.value_or(cfg.seed));
  std::ostringstream records;
  for (const EpisodeRecord& e : summary.episodes) {
    json j = to_json(e);
    j["type"] = "episode";
    records << j.dump() << '\n';
  }
  json s = summary_json(summary);
  s["type"] = "summary";
  out << records.str() << s.dump() << '\n';
  if (out_dir) {
    make_dirs(*out_dir);
    write_text(fs::path(*out_dir) / "eval_episodes.jsonl", records.str());
    write_text(fs::path(*out_dir) / "eval_summary.json", s.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_ablate(const std::string& grid_path, const std::optional<std::string>& out_dir, std::size_t jobs,
               std::ostream& out) {
  const AblationGrid grid = read_ablation_grid(grid_path);
  fs::path root;
  if (out_dir) {
    root = *out_dir;
  } else if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') {
    root = fs::path(env) / "ablation";
  } else {
    root = "runs/ablation";
  }
  make_dirs(root);
  const std::vector<AblationRow> rows = run_ablation(grid, root, jobs);
  out << ablation_table_markdown(rows);
  const bool failed = std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return !r.error.empty(); });
  return failed ? kExitNumerical : kExitOk;
}

int cmd_plot(const std::vector<std::string>& paths, const std::optional<std::string>& out_dir, std::ostream& out) {
  std::vector<std::vector<json>> runs;
  for (const auto& p : paths) runs.push_back(read_metrics(p));
  const fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(paths.front()).parent_path();
  if (!dir.empty()) make_dirs(dir);
  std::optional<double> d;
  if (runs.front().front().contains("cost_limit")) d = runs.front().front().at("cost_limit").get<double>();
  const std::string suffix = runs.size() > 1 ? " (" + std::to_string(runs.size()) + " runs, mean +- std)" : "";
  write_text(dir / "return.svg", render_svg(metric_band(runs, "window_return"), {"Episode return" + suffix, "return", {}}));
  write_text(dir / "cost.svg", render_svg(metric_band(runs, "window_cost"), {"Episode cost" + suffix, "cost", d}));
  write_text(dir / "lambda.svg", render_svg(metric_band(runs, "lambda"), {"Lagrange multiplier" + suffix, "lambda", {}}));
  out << "wrote return.svg, cost.svg, lambda.svg to " << (dir.empty() ? "." : dir.string()) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained distributional MPO: train, evaluate, ablate and plot"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t episodes = 100;
  std::string checkpoint;
  std::string grid;
  std::size_t jobs = 1;
  std::vector<std::string> metrics;

  CLI::App* train = app.add_subcommand("train", "Train one run and write its run directory");
  train->add_option("--config", config, "JSON config file")->required();
  train->add_option("--override", overrides, "dotted.key=value, repeatable")->take_all();
  train->add_option("--out", out_dir, "Run directory");
  train->add_option("--seed", seed, "Overrides the config seed");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Evaluation seed (default: the run seed)");
  eval->add_option("--out", out_dir, "Also write records and summary here");

  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate->add_option("grid", grid, "Grid file")->required();
  ablate->add_option("--out", out_dir, "Root directory for the variant runs");
  ablate->add_option("--jobs", jobs, "Runs trained concurrently")->check(CLI::PositiveNumber);

  CLI::App* plot = app.add_subcommand("plot", "Plot return, cost and lambda from metrics files");
  plot->add_option("metrics", metrics, "metrics.jsonl files")->required();
  plot->add_option("--out", out_dir, "Output directory (default: next to the first file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config, overrides, out_dir, seed, out);
    if (*eval) return cmd_eval(checkpoint, episodes, seed, out_dir, out);
    if (*ablate) return cmd_ablate(grid, out_dir, jobs, out);
    if (*plot) return cmd_plot(metrics, out_dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace cdmpo
