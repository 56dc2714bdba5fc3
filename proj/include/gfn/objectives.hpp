#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/losses.hpp"
#include "gfn/model.hpp"

namespace gfn {

enum class ObjectiveVariant { FM, DB, TB, STB, FL_DB, FL_STB, MOD_DB, MOD_STB };

enum class BackwardMode { uniform, learned };

struct ObjectiveKind {
  ObjectiveVariant variant = ObjectiveVariant::TB;
  BackwardMode backward = BackwardMode::uniform;
  double stb_lambda = 0.9;
};

const char* objective_name(ObjectiveVariant v);
ObjectiveVariant objective_from_name(const std::string& name);

bool is_db_family(ObjectiveVariant v);
bool is_stb_family(ObjectiveVariant v);

// Heads a model must expose to evaluate this objective on this dag.
HeadLayout required_layout(const ObjectiveKind& kind, const FlowDag& dag);

struct TrainObject {
  enum class Kind { state, transition, partial, complete };
  Kind kind;
  StateId state = kNoState;
  StateId from = kNoState, to = kNoState;
  Trajectory traj;

  static TrainObject make_state(StateId s) {
    TrainObject o;
    o.kind = Kind::state;
    o.state = s;
    return o;
  }
  static TrainObject make_transition(StateId from, StateId to) {
    TrainObject o;
    o.kind = Kind::transition;
    o.from = from;
    o.to = to;
    return o;
  }
  static TrainObject make_partial(Trajectory t) {
    TrainObject o;
    o.kind = Kind::partial;
    o.traj = std::move(t);
    return o;
  }
  static TrainObject make_complete(Trajectory t) {
    TrainObject o;
    o.kind = Kind::complete;
    o.traj = std::move(t);
    return o;
  }
};

// Log forward/backward flow assigned to one training object; the loss
// argument is log_pb - log_pf.
struct FlowPair {
  double log_pf;
  double log_pb;
};

// The parameterization mapping: (kind, model heads, object) -> flow pair,
// all in log space. Virtual states/transitions of a graded dag evaluate to
// equal pairs so they drop out of the loss.
FlowPair flow_pair(const ObjectiveKind& kind, EvalContext& ctx, const TrainObject& o);

// Accumulates d(loss)/d(log_pf or log_pb) through the same mapping.
void flow_pair_backward(const ObjectiveKind& kind, EvalContext& ctx, const TrainObject& o,
                        double d_log_pf, double d_log_pb);

struct WeightedBatch {
  std::vector<std::pair<TrainObject, double>> items;
};

struct LossOptions {
  double clamp_bound = 30.0;  // <= 0 disables clamping
};

struct LossStats {
  std::int64_t clamp_events = 0;
};

// sum_i w_i * g(log_pb_i - log_pf_i). Weights are constants under
// differentiation. When `with_grad`, gradients accumulate into the context
// (flush with ctx.backward()). The clamp is a value clamp whose gradient
// passes through unchanged.
double unified_loss(const WeightedBatch& batch, const ObjectiveKind& kind, EvalContext& ctx,
                    const RegressionLoss& loss, const LossOptions& options, LossStats* stats,
                    bool with_grad);

// Every contiguous sub-trajectory of a complete trajectory with weights
// lambda^(j-i) normalized to sum 1.
std::vector<std::pair<Trajectory, double>> subtb_object_weights(const Trajectory& traj,
                                                                double lambda);

}  // namespace gfn
