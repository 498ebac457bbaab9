#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdmpo/plot.hpp"
#include "cdmpo/run.hpp"
#include "fixtures.hpp"

using namespace cdmpo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cdmpo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cdmpo_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const json& tree, const std::string& name = "config.json") {
  std::ofstream(dir / name) << tree.dump(2);
  return dir / name;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string line; std::getline(f, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("train writes a complete run directory") {
  TempDir tmp("train");
  json tree = testing::tiny_chain_tree();
  tree["total_steps"] = 1000;
  tree["checkpoint_interval"] = 5;
  const fs::path cfg = write_config(tmp.path, tree);
  const CliResult r = cli({"train", "--config", cfg.string(), "--out", (tmp.path / "run").string()});
  CHECK(r.code == 0);
  const fs::path run = tmp.path / "run";
  for (const char* f : {"config.json", "manifest.json", "metrics.jsonl", "episodes.jsonl", "checkpoints/final.ckpt",
                        "checkpoints/iter_000005.ckpt", "checkpoints/iter_000010.ckpt"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  CHECK(line_count(run / "metrics.jsonl") == 10);
  const json manifest = json::parse(slurp(run / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  const json last = read_metrics(run / "metrics.jsonl").back();
  CHECK(last["env_steps"] == 1000);
  CHECK(last["violations"].get<std::size_t>() ==
        count_violations(read_episode_log(run / "episodes.jsonl"), tree["cost_limit"].get<double>()));
}

TEST_CASE("train reports configuration errors with the offending key") {
  TempDir tmp("badcfg");
  json tree = testing::tiny_chain_tree();
  tree.erase("cost_limit");
  const fs::path cfg = write_config(tmp.path, tree);
  const CliResult r = cli({"train", "--config", cfg.string(), "--out", (tmp.path / "run").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("cost_limit") != std::string::npos);

  const CliResult o = cli({"train", "--config", write_config(tmp.path, testing::tiny_chain_tree(), "ok.json").string(),
                           "--override", "gamma=2", "--out", (tmp.path / "run2").string()});
  CHECK(o.code == kExitConfig);
  CHECK(o.err.find("gamma") != std::string::npos);

  CHECK(cli({"train"}).code == kExitConfig);
  CHECK(cli({"frobnicate"}).code == kExitConfig);
  CHECK(cli({"train", "--config", (tmp.path / "absent.json").string()}).code == kExitIo);
}

TEST_CASE("two identical runs write byte-identical metrics") {
  TempDir tmp("determinism");
  const fs::path cfg = write_config(tmp.path, testing::tiny_hazard_tree(3));
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", (tmp.path / "a").string()}).code == 0);
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", (tmp.path / "b").string()}).code == 0);
  CHECK(slurp(tmp.path / "a" / "metrics.jsonl") == slurp(tmp.path / "b" / "metrics.jsonl"));
  CHECK(slurp(tmp.path / "a" / "episodes.jsonl") == slurp(tmp.path / "b" / "episodes.jsonl"));
  CHECK(slurp(tmp.path / "a" / "checkpoints" / "final.ckpt") == slurp(tmp.path / "b" / "checkpoints" / "final.ckpt"));
}

TEST_CASE("the seed flag and the output root select the run directory") {
  TempDir tmp("outroot");
  const fs::path cfg = write_config(tmp.path, testing::tiny_chain_tree());
  ::setenv(kOutputRootEnv, (tmp.path / "root").string().c_str(), 1);
  const CliResult r = cli({"train", "--config", cfg.string(), "--seed", "12"});
  ::unsetenv(kOutputRootEnv);
  CHECK(r.code == 0);
  CHECK(fs::exists(tmp.path / "root" / "chain-CDMPO-seed12" / "metrics.jsonl"));
  TrainerConfig c = testing::tiny_chain();
  CHECK(resolve_output_dir(std::string("x"), c) == fs::path("x"));
  c.output_dir = "y";
  CHECK(resolve_output_dir(std::nullopt, c) == fs::path("y"));
}

TEST_CASE("eval prints episode records and a consistent summary") {
  TempDir tmp("eval");
  const fs::path cfg = write_config(tmp.path, testing::tiny_chain_tree());
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", (tmp.path / "run").string()}).code == 0);
  const fs::path ckpt = tmp.path / "run" / "checkpoints" / "final.ckpt";

  const CliResult one = cli({"eval", ckpt.string(), "--episodes", "1"});
  CHECK(one.code == 0);
  std::istringstream lines(one.out);
  std::string a, b;
  std::getline(lines, a);
  std::getline(lines, b);
  CHECK(json::parse(a)["type"] == "episode");
  CHECK(json::parse(b)["type"] == "summary");
  CHECK(json::parse(b)["episodes"] == 1);

  const CliResult many = cli({"eval", ckpt.string(), "--episodes", "25", "--seed", "4", "--out", (tmp.path / "ev").string()});
  CHECK(many.code == 0);
  std::vector<EpisodeRecord> log;
  json summary;
  std::istringstream all(many.out);
  for (std::string line; std::getline(all, line);) {
    const json j = json::parse(line);
    if (j["type"] == "episode") log.push_back(episode_from_json(j));
    else summary = j;
  }
  REQUIRE(log.size() == 25);
  double ret = 0.0;
  for (const auto& e : log) ret += e.ret;
  CHECK(summary["mean_return"].get<double>() == doctest::Approx(ret / 25));
  CHECK(fs::exists(tmp.path / "ev" / "eval_summary.json"));

  std::string bytes = slurp(ckpt);
  bytes[0] = 'X';
  std::ofstream(tmp.path / "bad.ckpt", std::ios::binary) << bytes;
  CHECK(cli({"eval", (tmp.path / "bad.ckpt").string()}).code == kExitIo);
  CHECK(cli({"eval", (tmp.path / "missing.ckpt").string()}).code == kExitIo);
}

TEST_CASE("ablate runs the grid and recounts violations from the logs") {
  TempDir tmp("ablate");
  write_config(tmp.path, testing::tiny_chain_tree(), "base.json");
  const json grid = {{"base", "base.json"},
                     {"seeds", {1, 2}},
                     {"variants",
                      {{{"name", "cdmpo"}, {"overrides", json::object()}},
                       {{"name", "nocdcl"}, {"overrides", {{"variant", "CDMPO-no-CDCL"}}}},
                       {{"name", "dmpo"}, {"overrides", {{"variant", "DMPO-Lag"}}}},
                       {{"name", "mpo"}, {"overrides", {{"variant", "MPO-Lag"}, {"controller.k_p", 0.5}}}}}}};
  std::ofstream(tmp.path / "grid.json") << grid.dump(2);
  const CliResult r = cli({"ablate", (tmp.path / "grid.json").string(), "--out", (tmp.path / "out").string(), "--jobs", "2"});
  CHECK(r.code == 0);
  const json table = json::parse(slurp(tmp.path / "out" / "table.json"));
  REQUIRE(table.size() == 4);
  for (const json& row : table) {
    std::size_t total = 0;
    for (int seed : {1, 2}) {
      const fs::path dir = tmp.path / "out" / row["variant"].get<std::string>() / ("seed" + std::to_string(seed));
      const TrainerConfig cfg = config_from_json(json::parse(slurp(dir / "config.json")));
      total += count_violations(read_episode_log(dir / "episodes.jsonl"), cfg.cost_limit);
    }
    CHECK(row["total_violations"].get<std::size_t>() == total);
  }
  CHECK(fs::exists(tmp.path / "out" / "table.md"));
  const TrainerConfig mpo = config_from_json(json::parse(slurp(tmp.path / "out" / "mpo" / "seed2" / "config.json")));
  CHECK(mpo.variant == Variant::kMpoLag);
  CHECK(mpo.controller.gains.k_p == 0.5);
  CHECK(mpo.seed == 2);
}

TEST_CASE("a one-variant grid reproduces a plain training run") {
  TempDir tmp("ablate_one");
  write_config(tmp.path, testing::tiny_chain_tree(), "base.json");
  const json grid = {{"base", "base.json"}, {"seeds", {5}}, {"variants", {{{"name", "only"}, {"overrides", json::object()}}}}};
  std::ofstream(tmp.path / "grid.json") << grid.dump();
  REQUIRE(cli({"ablate", (tmp.path / "grid.json").string(), "--out", (tmp.path / "out").string()}).code == 0);
  REQUIRE(cli({"train", "--config", (tmp.path / "base.json").string(), "--seed", "5", "--out",
               (tmp.path / "train").string()})
              .code == 0);
  CHECK(slurp(tmp.path / "out" / "only" / "seed5" / "metrics.jsonl") == slurp(tmp.path / "train" / "metrics.jsonl"));
}

TEST_CASE("grids with invalid variants fail before any training") {
  TempDir tmp("ablate_bad");
  write_config(tmp.path, testing::tiny_chain_tree(), "base.json");
  const json grid = {{"base", "base.json"},
                     {"seeds", {1}},
                     {"variants",
                      {{{"name", "good"}, {"overrides", json::object()}},
                       {{"name", "bad"}, {"overrides", {{"gamma", 1.5}}}}}}};
  std::ofstream(tmp.path / "grid.json") << grid.dump();
  CHECK(cli({"ablate", (tmp.path / "grid.json").string(), "--out", (tmp.path / "out").string()}).code == kExitConfig);
  CHECK_FALSE(fs::exists(tmp.path / "out" / "good" / "seed1" / "metrics.jsonl"));
}

TEST_CASE("band statistics are recomputed exactly") {
  const std::vector<double> x{0, 1, 2};
  const Band b = compute_band(x, {{1.0, 2.0, std::nullopt}, {3.0, 6.0, 5.0}});
  REQUIRE(b.x.size() == 3);
  CHECK(b.mean == std::vector<double>{2.0, 4.0, 5.0});
  CHECK(b.stddev[0] == doctest::Approx(1.0));
  CHECK(b.stddev[1] == doctest::Approx(2.0));
  CHECK(b.stddev[2] == 0.0);
  CHECK(b.runs == std::vector<std::size_t>{2, 2, 1});
  const Band empty = compute_band(x, {{std::nullopt, std::nullopt, std::nullopt}});
  CHECK(empty.x.empty());
}

TEST_CASE("plot writes three figures; single runs have no band") {
  TempDir tmp("plot");
  const fs::path cfg = write_config(tmp.path, testing::tiny_chain_tree());
  for (const char* s : {"1", "2"}) {
    REQUIRE(cli({"train", "--config", cfg.string(), "--seed", s, "--out", (tmp.path / s).string()}).code == 0);
  }
  const CliResult both = cli({"plot", (tmp.path / "1" / "metrics.jsonl").string(),
                              (tmp.path / "2" / "metrics.jsonl").string(), "--out", (tmp.path / "fig").string()});
  CHECK(both.code == 0);
  for (const char* f : {"return.svg", "cost.svg", "lambda.svg"}) CHECK(fs::exists(tmp.path / "fig" / f));
  const std::string cost_svg = slurp(tmp.path / "fig" / "lambda.svg");
  CHECK(cost_svg.find("class=\"band\"") != std::string::npos);
  CHECK(slurp(tmp.path / "fig" / "cost.svg").find("class=\"reference\"") != std::string::npos);

  // The band matches statistics recomputed from the two files.
  const std::vector<std::vector<json>> runs{read_metrics(tmp.path / "1" / "metrics.jsonl"),
                                            read_metrics(tmp.path / "2" / "metrics.jsonl")};
  const Band band = metric_band(runs, "lambda");
  for (std::size_t i = 0; i < band.x.size(); ++i) {
    const double a = runs[0][i]["lambda"].get<double>();
    const double b = runs[1][i]["lambda"].get<double>();
    CHECK(band.mean[i] == doctest::Approx((a + b) / 2));
    CHECK(band.stddev[i] == doctest::Approx(std::abs(a - b) / 2));
  }

  REQUIRE(cli({"plot", (tmp.path / "1" / "metrics.jsonl").string(), "--out", (tmp.path / "solo").string()}).code == 0);
  CHECK(slurp(tmp.path / "solo" / "lambda.svg").find("class=\"band\"") == std::string::npos);
  CHECK(slurp(tmp.path / "solo" / "lambda.svg").find("class=\"mean\"") != std::string::npos);

  std::ofstream(tmp.path / "empty.jsonl").flush();
  CHECK(cli({"plot", (tmp.path / "empty.jsonl").string()}).code == kExitIo);
  CHECK_THROWS_AS(read_metrics(tmp.path / "empty.jsonl"), IoError);
  std::ofstream(tmp.path / "junk.jsonl") << "{\"x\": 1}\n";
  CHECK_THROWS_AS(read_metrics(tmp.path / "junk.jsonl"), IoError);
}
