#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gfn/envs.hpp"
#include "gfn/model.hpp"
#include "gfn/objectives.hpp"
#include "test_helpers.hpp"

using namespace gfn;
using namespace gfn::testing;

TEST_CASE("forward policy is a masked softmax") {
  const FlowDag dag = two_leaf_dag(1.0, 1.0);
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  TabularModel model(dag.num_states(), layout);

  // equal logits -> uniform over the two children
  const auto probs = forward_policy(model, dag, 0);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] == doctest::Approx(0.5));
  CHECK(probs[1] == doctest::Approx(0.5));

  // a state with one child puts all mass there regardless of the logit
  model.set_head(1, 0, -14.0);
  CHECK(forward_policy(model, dag, 1)[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(forward_policy(model, dag, dag.sink()), Error);

  // probabilities normalize to machine precision
  model.set_head(0, 0, 3.0);
  model.set_head(0, 1, -2.0);
  const auto skewed = forward_policy(model, dag, 0);
  CHECK(std::abs(skewed[0] + skewed[1] - 1.0) <= 1e-12);
}

TEST_CASE("mlp with zero weights is uniform over valid children") {
  const FlowDag grid = make_hypergrid_dag({2, 3, 1e-4, -9.9e-5, 1.0 - 1e-6});
  HeadLayout layout;
  layout.fwd = grid.num_forward_actions();
  MlpSpec spec;
  spec.input_dim = 6;
  spec.hidden_layers = 2;
  spec.hidden_width = 8;
  Rng rng(1);
  MlpModel model(spec, layout, hypergrid_encoder({2, 3, 1e-4, -9.9e-5, 1.0 - 1e-6}), rng);
  std::fill(model.params().begin(), model.params().end(), 0.0);
  const auto probs = forward_policy(model, grid, 0);
  REQUIRE(probs.size() == 3);
  for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("invalid actions receive exactly zero probability") {
  const FlowDag grid = make_hypergrid_dag({2, 3, 1e-4, -9.9e-5, 1.0 - 1e-6});
  HeadLayout layout;
  layout.fwd = grid.num_forward_actions();
  TabularModel model(grid.num_states(), layout);
  Rng rng(4);
  model.init_uniform(rng, 2.0);
  // corner cell (2,2) = state 8 has only the stop action
  const StateId corner = 8;
  REQUIRE(grid.children(corner).size() == 1);
  std::vector<double> action_mass(grid.num_forward_actions(), 0.0);
  const auto probs = forward_policy(model, grid, corner);
  const auto actions = grid.child_actions(corner);
  for (std::size_t k = 0; k < probs.size(); ++k) action_mass[actions[k]] = probs[k];
  CHECK(action_mass[2] == doctest::Approx(1.0));  // stop
  CHECK(action_mass[0] == 0.0);
  CHECK(action_mass[1] == 0.0);
}

TEST_CASE("adam bias-corrected first step") {
  HeadLayout layout;
  layout.fwd = 1;
  {
    // zero gradient from a fresh state leaves parameters unchanged
    TabularModel model(1, layout);
    AdamState adam(model, 1e-3, 1e-3);
    model.zero_grads();
    adam.step(model);
    CHECK(model.params()[0] == 0.0);
  }
  {
    // unit gradient at t=1 moves by ~lr after bias correction
    TabularModel model(1, layout);
    AdamState adam(model, 1e-3, 1e-3);
    model.grads()[0] = 1.0;
    adam.step(model);
    CHECK(model.params()[0] == doctest::Approx(-0.000999999).epsilon(1e-6));
  }
}

TEST_CASE("adam applies per-group learning rates") {
  const FlowDag dag = chain_dag();
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  layout.total_flow = true;
  TabularModel model(dag.num_states(), layout);
  AdamState adam(model, 1e-3, 0.1);
  for (auto& g : model.grads()) g = 1.0;
  adam.step(model);
  // both groups get the same bias-corrected unit update scaled by their lr
  CHECK(model.params()[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(model.log_total_flow() == doctest::Approx(-0.1).epsilon(1e-4));
}

TEST_CASE("gradients match finite differences on a tabular chain") {
  const FlowDag dag = two_leaf_dag(1.0, 3.0);
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::TB;
  HeadLayout layout = required_layout(kind, dag);
  TabularModel model(dag.num_states(), layout);
  Rng rng(9);
  model.init_uniform(rng, 0.5);

  const RegressionLoss loss = make_builtin_loss("quadratic");
  WeightedBatch batch;
  batch.items.push_back({TrainObject::make_complete({0, 1, 3}), 0.6});
  batch.items.push_back({TrainObject::make_complete({0, 2, 3}), 0.4});
  LossOptions options{0.0};  // clamping off

  EvalContext ctx(model, dag);
  model.zero_grads();
  unified_loss(batch, kind, ctx, loss, options, nullptr, true);
  ctx.backward();
  std::vector<double> grad(model.grads().begin(), model.grads().end());

  const double h = 1e-6;
  for (std::int32_t i = 0; i < model.num_params(); ++i) {
    const double saved = model.params()[i];
    EvalContext fresh(model, dag);
    model.params()[i] = saved + h;
    fresh.reset();
    const double up = unified_loss(batch, kind, fresh, loss, options, nullptr, false);
    model.params()[i] = saved - h;
    fresh.reset();
    const double down = unified_loss(batch, kind, fresh, loss, options, nullptr, false);
    model.params()[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("gradient vanishes at exact balance") {
  // two-leaf dag with a perfectly balanced tabular model
  const FlowDag dag = two_leaf_dag(1.0, 3.0);
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::TB;
  HeadLayout layout = required_layout(kind, dag);
  TabularModel model(dag.num_states(), layout);
  model.set_log_total_flow(std::log(4.0));
  model.set_head(0, 0, std::log(0.25));
  model.set_head(0, 1, std::log(0.75));

  WeightedBatch batch;
  batch.items.push_back({TrainObject::make_complete({0, 1, 3}), 0.5});
  batch.items.push_back({TrainObject::make_complete({0, 2, 3}), 0.5});
  for (const auto& name : {"quadratic", "linex1", "linex_half", "shifted_cosh"}) {
    EvalContext ctx(model, dag);
    model.zero_grads();
    const double value =
        unified_loss(batch, kind, ctx, make_builtin_loss(name), LossOptions{0.0}, nullptr, true);
    CHECK(std::abs(value) < 1e-20);
    ctx.backward();
    double norm = 0.0;
    for (double g : model.grads()) norm += g * g;
    CHECK(std::sqrt(norm) < 1e-8);
  }
}

TEST_CASE("graph_not_recorded guards backward") {
  const FlowDag dag = chain_dag();
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  TabularModel model(dag.num_states(), layout);
  EvalContext ctx(model, dag);
  ctx.log_forward(0);  // evaluation without gradient recording
  CHECK_THROWS_AS(ctx.backward(), Error);
}

TEST_CASE("training is bit-deterministic across reruns") {
  auto run = [](std::vector<double>& out) {
    const FlowDag dag = two_leaf_dag(1.0, 2.0);
    ObjectiveKind kind;
    kind.variant = ObjectiveVariant::TB;
    Rng rng(77);
    HeadLayout layout = required_layout(kind, dag);
    MlpSpec spec;
    spec.input_dim = dag.num_states();
    spec.hidden_layers = 2;
    spec.hidden_width = 8;
    MlpModel model(spec, layout, one_hot_encoder(dag.num_states()), rng);
    AdamState adam(model, 1e-3, 0.1);
    EvalContext ctx(model, dag);
    const RegressionLoss loss = make_builtin_loss("quadratic");
    const auto trajs = enumerate_complete_trajectories(dag);
    for (int step = 0; step < 100; ++step) {
      model.zero_grads();
      ctx.reset();
      WeightedBatch batch;
      for (const auto& t : trajs) batch.items.push_back({TrainObject::make_complete(t), 0.5});
      unified_loss(batch, kind, ctx, loss, LossOptions{30.0}, nullptr, true);
      ctx.backward();
      adam.step(model);
    }
    out.assign(model.params().begin(), model.params().end());
  };
  std::vector<double> a, b;
  run(a);
  run(b);
  CHECK(a == b);
}

TEST_CASE("checkpoints round trip and refuse mismatched configs") {
  namespace fs = std::filesystem;
  const FlowDag dag = two_leaf_dag(1.0, 2.0);
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  layout.total_flow = true;
  TabularModel model(dag.num_states(), layout);
  Rng rng(5);
  model.init_uniform(rng, 1.0);
  model.set_log_total_flow(0.37);

  const std::string path = (fs::temp_directory_path() / "gfn_ckpt_test.bin").string();
  save_checkpoint(path, model, 1234);

  TabularModel loaded(dag.num_states(), layout);
  load_checkpoint(path, loaded, 1234);
  CHECK(std::equal(model.params().begin(), model.params().end(), loaded.params().begin()));

  CHECK_THROWS_AS(load_checkpoint(path, loaded, 999), Error);

  HeadLayout other = layout;
  other.state_flow = true;
  TabularModel wrong_shape(dag.num_states(), other);
  CHECK_THROWS_AS(load_checkpoint(path, wrong_shape, 1234), Error);
  fs::remove(path);
}
