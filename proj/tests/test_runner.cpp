#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gfn/metrics.hpp"
#include "gfn/runner.hpp"

using namespace gfn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tabular_tb_config() {
  return parse_config_text(R"(
env.type = random_dag
env.layers = 2
env.width = 2
env.seed = 12
objective.kind = tb
loss.name = quadratic
model.kind = tabular
training.steps = 2000
training.batch_size = 8
training.lr = 0.05
training.z_lr = 0.05
training.seed = 1
eval.interval = 500
)");
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("tabular tb training reaches the reward distribution") {
  const RunSummary summary = run_experiment(tabular_tb_config(), "");
  REQUIRE(summary.ok);
  REQUIRE(summary.final_report.l1_exact.has_value());
  CHECK(*summary.final_report.l1_exact < 1e-3);
  CHECK(summary.trajectories == 16'000);
}

TEST_CASE("identical config and seed reproduce identical csv bytes") {
  const fs::path dir = fs::temp_directory_path() / "gfn_runner_det";
  fs::remove_all(dir);
  ExperimentConfig config = tabular_tb_config();
  config.training_steps = 300;
  const RunSummary a = run_experiment(config, (dir / "a").string());
  const RunSummary b = run_experiment(config, (dir / "b").string());
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  const std::string csv_a = slurp(dir / "a" / "metrics.csv");
  const std::string csv_b = slurp(dir / "b" / "metrics.csv");
  CHECK(!csv_a.empty());
  CHECK(csv_a == csv_b);
  fs::remove_all(dir);
}

TEST_CASE("csv header is the pinned schema") {
  const fs::path dir = fs::temp_directory_path() / "gfn_runner_csv";
  fs::remove_all(dir);
  ExperimentConfig config = tabular_tb_config();
  config.training_steps = 10;
  config.eval_interval = 5;
  run_experiment(config, dir.string());
  std::ifstream is(dir / "metrics.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == kCsvHeader);
  fs::remove_all(dir);
}

TEST_CASE("summary reports the config hash and checkpoint loads back") {
  const fs::path dir = fs::temp_directory_path() / "gfn_runner_sum";
  fs::remove_all(dir);
  ExperimentConfig config = tabular_tb_config();
  config.training_steps = 50;
  const RunSummary summary = run_experiment(config, dir.string());
  CHECK(summary.config_hash == config_hash(config));
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "config.cfg"));
  // the emitted config re-parses to the same hash
  const ExperimentConfig back = load_config_file((dir / "config.cfg").string());
  CHECK(config_hash(back) == summary.config_hash);
  fs::remove_all(dir);
}

TEST_CASE("run_suite isolates failures and aggregates") {
  std::vector<ExperimentConfig> configs;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ExperimentConfig config = tabular_tb_config();
    config.training_steps = 60;
    config.training_seed = seed;
    configs.push_back(config);
  }
  // a config that fails at environment construction
  ExperimentConfig broken = tabular_tb_config();
  broken.env_type = "bitseq";
  broken.env_n = 13;  // k does not divide n
  configs.push_back(broken);

  const auto results = run_suite(configs, 2, "");
  REQUIRE(results.size() == 4);
  for (int i = 0; i < 3; ++i) CHECK(results[i].ok);
  CHECK_FALSE(results[3].ok);
  CHECK(!results[3].error.empty());

  CHECK(run_suite({}, 4, "").empty());
}

TEST_CASE("bitseq runs track modes and write the target set") {
  const fs::path dir = fs::temp_directory_path() / "gfn_runner_bitseq";
  fs::remove_all(dir);
  const ExperimentConfig config = parse_config_text(R"(
env.type = bitseq
env.n = 8
env.k = 4
env.num_targets = 2
env.delta = 1
env.seed = 5
objective.kind = tb
loss.name = linex1
model.kind = mlp
model.hidden_layers = 1
model.hidden_width = 16
training.steps = 120
training.batch_size = 8
training.seed = 2
sampler.mode = epsilon_noisy
sampler.epsilon = 0.05
eval.interval = 40
eval.spearman = exact
)");
  const RunSummary summary = run_experiment(config, dir.string());
  REQUIRE(summary.ok);
  REQUIRE(summary.final_report.modes_found.has_value());
  CHECK(*summary.final_report.modes_found >= 0);
  CHECK(summary.final_report.spearman.has_value());
  CHECK(fs::exists(dir / "targets.hex"));
  std::ifstream targets(dir / "targets.hex");
  std::string line;
  int count = 0;
  while (std::getline(targets, line))
    if (!line.empty()) ++count;
  CHECK(count == 2);
  fs::remove_all(dir);
}
