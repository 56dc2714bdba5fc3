#include <doctest.h>

#include <cmath>

#include "gfn/envs.hpp"
#include "gfn/model.hpp"
#include "gfn/objectives.hpp"
#include "test_helpers.hpp"

using namespace gfn;
using namespace gfn::testing;

namespace {

HeadLayout full_layout(const FlowDag& dag) {
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  layout.bwd = dag.num_backward_actions();
  layout.state_flow = true;
  layout.fl = true;
  layout.total_flow = true;
  return layout;
}

// Flow-consistent heads for an all-terminating dag under the uniform
// backward policy: edge flows by reverse dynamic programming from the
// rewards, forward logits = log edge flows, state flow = log F(s),
// fl = log F(s) - log R(s), log Z = log(total reward).
TabularModel balanced_model(const FlowDag& dag) {
  TabularModel model(dag.num_states(), full_layout(dag));
  const auto order = [&] {
    // reverse topological order from layer indices
    std::vector<StateId> s(dag.num_states());
    for (StateId i = 0; i < dag.num_states(); ++i) s[i] = i;
    const auto layer = layer_index(dag);
    std::stable_sort(s.begin(), s.end(),
                     [&](StateId a, StateId b) { return layer[a] > layer[b]; });
    return s;
  }();

  std::vector<double> state_flow(dag.num_states(), 0.0);
  std::vector<std::vector<double>> edge_flow(dag.num_states());
  for (StateId s : order) {
    if (s == dag.sink()) continue;
    const auto children = dag.children(s);
    edge_flow[s].assign(children.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < children.size(); ++k) {
      const StateId c = children[k];
      double flow;
      if (c == dag.sink())
        flow = dag.reward(s);
      else
        flow = state_flow[c] / static_cast<double>(dag.parents(c).size());
      edge_flow[s][k] = flow;
      total += flow;
    }
    state_flow[s] = total;
  }

  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    const auto children = dag.children(s);
    const auto actions = dag.child_actions(s);
    for (std::size_t k = 0; k < children.size(); ++k)
      model.set_head(s, actions[k], std::log(edge_flow[s][k]));
    model.set_head(s, model.layout().state_flow_offset(), std::log(state_flow[s]));
    if (dag.is_terminating(s))
      model.set_head(s, model.layout().fl_offset(),
                     std::log(state_flow[s]) - dag.log_reward(s));
  }
  model.set_log_total_flow(std::log(state_flow[dag.source()]));
  return model;
}

WeightedBatch all_objects(const ObjectiveKind& kind, const FlowDag& dag) {
  WeightedBatch batch;
  switch (kind.variant) {
    case ObjectiveVariant::FM:
      for (StateId s = 0; s < dag.num_states(); ++s)
        if (s != dag.source() && s != dag.sink())
          batch.items.push_back({TrainObject::make_state(s), 1.0});
      break;
    case ObjectiveVariant::DB:
    case ObjectiveVariant::FL_DB:
    case ObjectiveVariant::MOD_DB:
      for (StateId s = 0; s < dag.num_states(); ++s)
        for (StateId c : dag.children(s))
          batch.items.push_back({TrainObject::make_transition(s, c), 1.0});
      break;
    case ObjectiveVariant::TB:
      for (const auto& tau : enumerate_complete_trajectories(dag))
        batch.items.push_back({TrainObject::make_complete(tau), 1.0});
      break;
    default:
      for (const auto& tau : enumerate_complete_trajectories(dag))
        for (auto& [sub, w] : subtb_object_weights(tau, kind.stb_lambda))
          batch.items.push_back({TrainObject::make_partial(std::move(sub)), w});
      break;
  }
  return batch;
}

}  // namespace

TEST_CASE("tb flow pair on the balanced chain") {
  const FlowDag dag = chain_dag(2.0);
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  layout.total_flow = true;
  TabularModel model(dag.num_states(), layout);
  model.set_log_total_flow(std::log(2.0));
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::TB;
  EvalContext ctx(model, dag);
  const FlowPair fp = flow_pair(kind, ctx, TrainObject::make_complete({0, 1, 2}));
  CHECK(fp.log_pf == doctest::Approx(std::log(2.0)));
  CHECK(fp.log_pb == doctest::Approx(std::log(2.0)));
}

TEST_CASE("db backward flow at the sink is the reward") {
  const FlowDag dag = two_leaf_dag(0.7, 1.3);
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::DB;
  kind.backward = BackwardMode::learned;
  HeadLayout layout = required_layout(kind, dag);
  TabularModel model(dag.num_states(), layout);
  Rng rng(3);
  model.init_uniform(rng, 1.0);
  EvalContext ctx(model, dag);
  const FlowPair fp = flow_pair(kind, ctx, TrainObject::make_transition(1, dag.sink()));
  CHECK(fp.log_pb == doctest::Approx(std::log(0.7)));
}

TEST_CASE("fm flow pair sums inflow and outflow on the diamond") {
  const FlowDag dag = diamond_dag(2.0);
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::FM;
  HeadLayout layout = required_layout(kind, dag);
  TabularModel model(dag.num_states(), layout);
  // log edge flows: 0->1: log 1, 0->2: log 2, 1->3: log 3, 2->3: log 4
  model.set_head(0, 0, std::log(1.0));
  model.set_head(0, 1, std::log(2.0));
  model.set_head(1, 0, std::log(3.0));
  model.set_head(2, 0, std::log(4.0));
  EvalContext ctx(model, dag);

  const FlowPair at1 = flow_pair(kind, ctx, TrainObject::make_state(1));
  CHECK(at1.log_pf == doctest::Approx(std::log(1.0)));
  CHECK(at1.log_pb == doctest::Approx(std::log(3.0)));

  const FlowPair at3 = flow_pair(kind, ctx, TrainObject::make_state(3));
  CHECK(at3.log_pf == doctest::Approx(std::log(3.0 + 4.0)));
  CHECK(at3.log_pb == doctest::Approx(std::log(2.0)));  // reward only

  CHECK_THROWS_AS(flow_pair(kind, ctx, TrainObject::make_state(dag.source())), Error);
  CHECK_THROWS_AS(flow_pair(kind, ctx, TrainObject::make_complete({0, 1, 3, 4})), Error);
}

TEST_CASE("unified loss evaluates weighted g of the log ratio") {
  // two trajectories with log-ratios +1 and -1 under TB
  const double e = std::exp(1.0);
  FlowDagBuilder b(4);
  b.set_source(0).set_sink(3);
  b.add_edge(0, 1).add_edge(0, 2).add_edge(1, 3).add_edge(2, 3);
  b.set_reward(1, e / 2.0).set_reward(2, 1.0 / (2.0 * e));
  const FlowDag dag = b.build();

  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::TB;
  HeadLayout layout = required_layout(kind, dag);
  TabularModel model(dag.num_states(), layout);  // log Z = 0, uniform split

  WeightedBatch batch;
  batch.items.push_back({TrainObject::make_complete({0, 1, 3}), 0.3});
  batch.items.push_back({TrainObject::make_complete({0, 2, 3}), 0.7});
  EvalContext ctx(model, dag);

  const double linex = unified_loss(batch, kind, ctx, make_builtin_loss("linex1"),
                                    LossOptions{30.0}, nullptr, false);
  CHECK(linex == doctest::Approx(0.3 * (e - 2.0) + 0.7 / e).epsilon(1e-9));
  CHECK(linex == doctest::Approx(0.472970).epsilon(1e-5));

  WeightedBatch single;
  single.items.push_back({TrainObject::make_complete({0, 1, 3}), 1.0});
  const double quad = unified_loss(single, kind, ctx, make_builtin_loss("quadratic"),
                                   LossOptions{30.0}, nullptr, false);
  CHECK(quad == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("clamping bounds the loss argument and counts events") {
  const FlowDag dag = chain_dag(std::exp(40.0));  // log-ratio 40 at log Z = 0
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::TB;
  TabularModel model(dag.num_states(), required_layout(kind, dag));
  EvalContext ctx(model, dag);
  WeightedBatch batch;
  batch.items.push_back({TrainObject::make_complete({0, 1, 2}), 1.0});
  LossStats stats;
  const double clamped = unified_loss(batch, kind, ctx, make_builtin_loss("quadratic"),
                                      LossOptions{30.0}, &stats, false);
  CHECK(clamped == doctest::Approx(450.0));
  CHECK(stats.clamp_events == 1);
  const double raw = unified_loss(batch, kind, ctx, make_builtin_loss("quadratic"),
                                  LossOptions{0.0}, &stats, false);
  CHECK(raw == doctest::Approx(800.0));
  CHECK(stats.clamp_events == 1);
}

TEST_CASE("every objective kind is zero on an exactly balanced network") {
  RandomDagSpec spec;
  spec.layers = 3;
  spec.width = 2;
  spec.edge_density = 0.7;
  spec.seed = 41;
  const FlowDag dag = random_all_terminating_dag(spec);
  TabularModel model = balanced_model(dag);

  const std::vector<ObjectiveVariant> variants = {
      ObjectiveVariant::FM,     ObjectiveVariant::DB,     ObjectiveVariant::TB,
      ObjectiveVariant::STB,    ObjectiveVariant::FL_DB,  ObjectiveVariant::FL_STB,
      ObjectiveVariant::MOD_DB, ObjectiveVariant::MOD_STB};
  for (const auto variant : variants) {
    ObjectiveKind kind;
    kind.variant = variant;
    kind.backward = BackwardMode::learned;  // equal logits = the uniform construction
    kind.stb_lambda = 0.9;
    for (const auto& loss : {"quadratic", "linex1", "linex_half", "shifted_cosh"}) {
      EvalContext ctx(model, dag);
      const double value = unified_loss(all_objects(kind, dag), kind, ctx,
                                        make_builtin_loss(loss), LossOptions{0.0}, nullptr, false);
      CAPTURE(objective_name(variant));
      CAPTURE(loss);
      CHECK(std::abs(value) < 1e-10);
    }
  }
}

TEST_CASE("modified-db equals db at the induced state flow") {
  RandomDagSpec spec;
  spec.layers = 3;
  spec.width = 2;
  spec.seed = 99;
  const FlowDag dag = random_all_terminating_dag(spec);

  HeadLayout layout = full_layout(dag);
  TabularModel model(dag.num_states(), layout);
  Rng rng(7);
  model.init_uniform(rng, 1.0);

  // state-flow head := log R(s) - log P_F(sink | s) induced by the logits
  EvalContext probe(model, dag);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    const int sink_slot = dag.child_slot(s, dag.sink());
    const double log_pf_sink = probe.log_forward(s)[sink_slot];
    model.set_head(s, layout.state_flow_offset(), dag.log_reward(s) - log_pf_sink);
  }

  ObjectiveKind mod;
  mod.variant = ObjectiveVariant::MOD_DB;
  mod.backward = BackwardMode::learned;
  ObjectiveKind db;
  db.variant = ObjectiveVariant::DB;
  db.backward = BackwardMode::learned;

  EvalContext ctx(model, dag);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    for (StateId c : dag.children(s)) {
      const TrainObject o = TrainObject::make_transition(s, c);
      const FlowPair a = flow_pair(mod, ctx, o);
      const FlowPair bb = flow_pair(db, ctx, o);
      CHECK(std::abs((a.log_pb - a.log_pf) - (bb.log_pb - bb.log_pf)) < 1e-10);
    }
  }

  // and the stb variants through the same substitution
  ObjectiveKind mod_stb;
  mod_stb.variant = ObjectiveVariant::MOD_STB;
  mod_stb.backward = BackwardMode::learned;
  ObjectiveKind stb;
  stb.variant = ObjectiveVariant::STB;
  stb.backward = BackwardMode::learned;
  for (const auto& tau : enumerate_complete_trajectories(dag))
    for (const auto& [sub, w] : subtb_object_weights(tau, 0.9)) {
      const TrainObject o = TrainObject::make_partial(sub);
      const FlowPair a = flow_pair(mod_stb, ctx, o);
      const FlowPair bb = flow_pair(stb, ctx, o);
      CHECK(std::abs((a.log_pb - a.log_pf) - (bb.log_pb - bb.log_pf)) < 1e-10);
    }
}

TEST_CASE("forward-looking db equals db at the induced state flow") {
  RandomDagSpec spec;
  spec.layers = 3;
  spec.width = 2;
  spec.seed = 5;
  const FlowDag dag = random_all_terminating_dag(spec);

  HeadLayout layout = full_layout(dag);
  TabularModel model(dag.num_states(), layout);
  Rng rng(13);
  model.init_uniform(rng, 1.0);
  // state-flow head := log R~ + log F~ so both spellings describe one flow
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    model.set_head(s, layout.state_flow_offset(),
                   dag.log_intermediate_reward(s) + model.head(s, layout.fl_offset()));
  }

  ObjectiveKind fl;
  fl.variant = ObjectiveVariant::FL_DB;
  fl.backward = BackwardMode::learned;
  ObjectiveKind db;
  db.variant = ObjectiveVariant::DB;
  db.backward = BackwardMode::learned;
  EvalContext ctx(model, dag);
  for (StateId s = 0; s < dag.num_states(); ++s)
    for (StateId c : dag.children(s)) {
      const TrainObject o = TrainObject::make_transition(s, c);
      const FlowPair a = flow_pair(fl, ctx, o);
      const FlowPair bb = flow_pair(db, ctx, o);
      CHECK(std::abs((a.log_pb - a.log_pf) - (bb.log_pb - bb.log_pf)) < 1e-10);
    }
}

TEST_CASE("modified variants demand all-terminating positive rewards") {
  const FlowDag dag = diamond_dag();  // interior states do not terminate
  ObjectiveKind kind;
  kind.variant = ObjectiveVariant::MOD_DB;
  TabularModel model(dag.num_states(), full_layout(dag));
  EvalContext ctx(model, dag);
  try {
    flow_pair(kind, ctx, TrainObject::make_transition(0, 1));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::modified_variant_precondition_violated);
  }
}

TEST_CASE("missing heads are reported") {
  const FlowDag dag = chain_dag();
  HeadLayout bare;
  bare.fwd = dag.num_forward_actions();
  TabularModel model(dag.num_states(), bare);
  EvalContext ctx(model, dag);
  ObjectiveKind tb;
  tb.variant = ObjectiveVariant::TB;
  try {
    flow_pair(tb, ctx, TrainObject::make_complete({0, 1, 2}));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::missing_model_head);
  }
  ObjectiveKind db;
  db.variant = ObjectiveVariant::DB;
  CHECK_THROWS_AS(flow_pair(db, ctx, TrainObject::make_transition(0, 1)), Error);
}

TEST_CASE("virtual objects drop out of fm and db losses") {
  // edge 1 -> 3 spans two layers; grading inserts one virtual state
  FlowDagBuilder b(5);
  b.set_source(0).set_sink(4);
  b.add_edge(0, 1).add_edge(1, 2).add_edge(2, 3).add_edge(1, 3).add_edge(3, 4);
  b.set_reward(3, 1.0);
  const FlowDag graded = insert_virtual_states(b.build());
  REQUIRE(graded.num_states() == 6);
  const StateId virt = 5;
  REQUIRE(graded.is_virtual(virt));

  HeadLayout layout = full_layout(graded);
  TabularModel model(graded.num_states(), layout);
  Rng rng(21);
  model.init_uniform(rng, 1.0);
  EvalContext ctx(model, graded);

  ObjectiveKind fm;
  fm.variant = ObjectiveVariant::FM;
  const FlowPair vpair = flow_pair(fm, ctx, TrainObject::make_state(virt));
  CHECK(vpair.log_pf == vpair.log_pb);

  ObjectiveKind db;
  db.variant = ObjectiveVariant::DB;
  db.backward = BackwardMode::learned;
  const FlowPair into_virtual = flow_pair(db, ctx, TrainObject::make_transition(1, virt));
  CHECK(into_virtual.log_pf == into_virtual.log_pb);
  // the chain's last transition carries the original edge's loss
  const FlowPair out_of_virtual = flow_pair(db, ctx, TrainObject::make_transition(virt, 3));
  CHECK(out_of_virtual.log_pf != out_of_virtual.log_pb);
}

TEST_CASE("subtb weights follow the lambda scheme") {
  const Trajectory tau{0, 1, 2};  // L = 2
  {
    const auto subs = subtb_object_weights(tau, 1.0);
    REQUIRE(subs.size() == 3);
    for (const auto& [sub, w] : subs) CHECK(w == doctest::Approx(1.0 / 3.0));
  }
  {
    const auto subs = subtb_object_weights(tau, 0.9);
    REQUIRE(subs.size() == 3);
    double total = 0.0;
    for (const auto& [sub, w] : subs) total += w;
    CHECK(total == doctest::Approx(1.0));
    // spans (0,1), (0,2), (1,2) in order: weights 0.9, 0.81, 0.9 over 2.61
    CHECK(subs[0].second == doctest::Approx(0.9 / 2.61));
    CHECK(subs[1].second == doctest::Approx(0.81 / 2.61));
    CHECK(subs[2].second == doctest::Approx(0.9 / 2.61));
    CHECK(subs[0].first == Trajectory{0, 1});
    CHECK(subs[1].first == Trajectory{0, 1, 2});
    CHECK(subs[2].first == Trajectory{1, 2});
  }
}
