#include <doctest.h>

#include "gfn/config.hpp"
#include "gfn/error.hpp"

using namespace gfn;

TEST_CASE("config parsing and round trip") {
  const std::string text = R"(
# hyper-grid run
env.type = hypergrid
env.D = 2
env.H = 8
objective.kind = tb
loss.name = linex1
model.kind = mlp
model.hidden_width = 64
training.trajectories = 50000
training.seed = 3
sampler.epsilon = 0.01
)";
  const ExperimentConfig config = parse_config_text(text);
  CHECK(config.env_d == 2);
  CHECK(config.loss_name == "linex1");
  CHECK(config.training_seed == 3);
  CHECK(config.sampler_epsilon == 0.01);
  CHECK(config.resolved_steps() == 3125);
  CHECK(config.resolved_trajectories() == 50'000);
  CHECK(config.resolved_window() == 5'000);

  // serialization round-trips bit-exactly
  const std::string canon = serialize_config(config);
  const ExperimentConfig back = parse_config_text(canon);
  CHECK(serialize_config(back) == canon);
  CHECK(config_hash(back) == config_hash(config));
}

TEST_CASE("config rejects malformed input") {
  CHECK_THROWS_AS(parse_config_text("training.seed = 1\nenv.typ = hypergrid\n"), Error);
  CHECK_THROWS_AS(parse_config_text("training.seed = 1\nenv.D = two\n"), Error);
  CHECK_THROWS_AS(parse_config_text("env.type = hypergrid\n"), Error);  // seed mandatory
  CHECK_THROWS_AS(
      parse_config_text("training.seed = 1\ntraining.steps = 5\ntraining.trajectories = 80\n"),
      Error);
  CHECK_THROWS_AS(parse_config_text("training.seed = 1\nno equals sign here\n"), Error);
  CHECK_THROWS_AS(parse_config_text("training.seed = 1\nenv.type = maze\n"), Error);
  CHECK_THROWS_AS(parse_config_text("training.seed = 1\nsampler.epsilon = 1.5\n"), Error);
}

TEST_CASE("config hash tracks semantic changes only") {
  ExperimentConfig a = parse_config_text("training.seed = 1\n");
  ExperimentConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.training_lr = 0.01;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.training_seed = 2;
  CHECK(config_hash(a) != config_hash(b));

  // formatting differences do not alter the hash
  const ExperimentConfig c = parse_config_text("  training.seed =   1   # comment\n");
  CHECK(config_hash(c) == config_hash(a));
}

TEST_CASE("training.epsilon aliases the sampler key") {
  const ExperimentConfig config =
      parse_config_text("training.seed = 1\ntraining.epsilon = 0.05\n");
  CHECK(config.sampler_epsilon == 0.05);
}
