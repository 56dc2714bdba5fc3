#include "gfn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gfn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

const char* objective_name(ObjectiveVariant v) {
  switch (v) {
    case ObjectiveVariant::FM: return "fm";
    case ObjectiveVariant::DB: return "db";
    case ObjectiveVariant::TB: return "tb";
    case ObjectiveVariant::STB: return "stb";
    case ObjectiveVariant::FL_DB: return "fl_db";
    case ObjectiveVariant::FL_STB: return "fl_stb";
    case ObjectiveVariant::MOD_DB: return "mod_db";
    case ObjectiveVariant::MOD_STB: return "mod_stb";
  }
  return "?";
}

ObjectiveVariant objective_from_name(const std::string& name) {
  if (name == "fm") return ObjectiveVariant::FM;
  if (name == "db") return ObjectiveVariant::DB;
  if (name == "tb") return ObjectiveVariant::TB;
  if (name == "stb") return ObjectiveVariant::STB;
  if (name == "fl_db") return ObjectiveVariant::FL_DB;
  if (name == "fl_stb") return ObjectiveVariant::FL_STB;
  if (name == "mod_db") return ObjectiveVariant::MOD_DB;
  if (name == "mod_stb") return ObjectiveVariant::MOD_STB;
  fail(errc::bad_config, "unknown objective '" + name + "'");
}

bool is_db_family(ObjectiveVariant v) {
  return v == ObjectiveVariant::DB || v == ObjectiveVariant::FL_DB ||
         v == ObjectiveVariant::MOD_DB;
}

bool is_stb_family(ObjectiveVariant v) {
  return v == ObjectiveVariant::STB || v == ObjectiveVariant::FL_STB ||
         v == ObjectiveVariant::MOD_STB;
}

HeadLayout required_layout(const ObjectiveKind& kind, const FlowDag& dag) {
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  const bool learned = kind.backward == BackwardMode::learned && kind.variant != ObjectiveVariant::FM;
  layout.bwd = learned ? dag.num_backward_actions() : 0;
  layout.state_flow = kind.variant == ObjectiveVariant::DB || kind.variant == ObjectiveVariant::STB;
  layout.fl = kind.variant == ObjectiveVariant::FL_DB || kind.variant == ObjectiveVariant::FL_STB;
  layout.total_flow = kind.variant == ObjectiveVariant::TB;
  return layout;
}

namespace {

struct Upstream {
  double d_pf = 0.0;
  double d_pb = 0.0;
  bool active = false;
};

// shared value/gradient walk; gradients only touch the context when
// up.active
class PairEval {
 public:
  PairEval(const ObjectiveKind& kind, EvalContext& ctx, const Upstream& up)
      : kind_(kind), ctx_(ctx), dag_(ctx.dag()), up_(up) {}

  FlowPair run(const TrainObject& o) {
    switch (kind_.variant) {
      case ObjectiveVariant::FM:
        require(o.kind == TrainObject::Kind::state, "fm expects state objects");
        return fm_state(o.state);
      case ObjectiveVariant::DB:
      case ObjectiveVariant::FL_DB:
      case ObjectiveVariant::MOD_DB:
        require(o.kind == TrainObject::Kind::transition, "db-family expects transitions");
        return db_edge(o.from, o.to);
      case ObjectiveVariant::TB:
        require(o.kind == TrainObject::Kind::complete, "tb expects complete trajectories");
        require(o.traj.size() >= 2 && o.traj.front() == dag_.source() &&
                    o.traj.back() == dag_.sink(),
                "trajectory is not complete");
        return tb_traj(o.traj);
      case ObjectiveVariant::STB:
      case ObjectiveVariant::FL_STB:
      case ObjectiveVariant::MOD_STB:
        require(o.kind == TrainObject::Kind::partial, "stb-family expects partial trajectories");
        require(o.traj.size() >= 2, "partial trajectory needs at least one edge");
        return stb_traj(o.traj);
    }
    fail(errc::incompatible_object, "unhandled objective variant");
  }

 private:
  const ObjectiveKind& kind_;
  EvalContext& ctx_;
  const FlowDag& dag_;
  const Upstream& up_;

  static void require(bool ok, const char* msg) {
    if (!ok) fail(errc::incompatible_object, msg);
  }

  void check_modified_precondition() {
    if (!dag_.all_states_terminating_positive())
      fail(errc::modified_variant_precondition_violated,
           "modified variants need every state terminating with positive reward");
  }

  int child_slot_checked(StateId s, StateId child) {
    const int slot = dag_.child_slot(s, child);
    if (slot < 0) fail(errc::incompatible_object, "object edge is not in the dag");
    return slot;
  }

  // --- head terms -----------------------------------------------------

  double term_log_pf(StateId s, int slot, double d) {
    if (up_.active && d != 0.0) ctx_.add_d_log_forward(s, slot, d);
    return ctx_.log_forward(s)[slot];
  }

  double term_log_pb_edge(StateId child, int parent_slot, double d) {
    if (kind_.backward == BackwardMode::learned) {
      if (up_.active && d != 0.0) ctx_.add_d_log_backward(child, parent_slot, d);
      return ctx_.log_backward(child)[parent_slot];
    }
    return ctx_.log_backward_uniform(child);
  }

  double term_state_flow(StateId s, double d) {
    if (up_.active && d != 0.0) ctx_.add_d_raw(s, ctx_.model().layout().state_flow_offset(), d);
    return ctx_.log_state_flow(s);
  }

  double term_fl(StateId s, double d) {
    if (up_.active && d != 0.0) ctx_.add_d_raw(s, ctx_.model().layout().fl_offset(), d);
    return ctx_.log_fl(s);
  }

  double term_log_z(double d) {
    if (up_.active && d != 0.0) ctx_.add_d_log_total_flow(d);
    return ctx_.log_total_flow();
  }

  double term_intermediate(StateId s) {
    if (!dag_.has_intermediate_rewards())
      fail(errc::missing_model_head,
           "forward-looking objectives need the environment's intermediate rewards");
    return dag_.log_intermediate_reward(s);
  }

  // state-flow factor of the current family at state s
  double flow_factor(StateId s, double d) {
    switch (kind_.variant) {
      case ObjectiveVariant::DB:
      case ObjectiveVariant::STB:
        return term_state_flow(s, d);
      case ObjectiveVariant::FL_DB:
      case ObjectiveVariant::FL_STB:
        return term_intermediate(s) + term_fl(s, d);
      case ObjectiveVariant::MOD_DB:
      case ObjectiveVariant::MOD_STB: {
        check_modified_precondition();
        const int sink_slot = child_slot_checked(s, dag_.sink());
        return dag_.log_reward(s) - term_log_pf(s, sink_slot, -d);
      }
      default:
        fail(errc::incompatible_object, "flow factor undefined for this variant");
    }
  }

  // --- parameterization mappings ---------------------------------------

  FlowPair fm_state(StateId s) {
    require(s != dag_.source() && s != dag_.sink(), "fm objects exclude source and sink");
    if (dag_.is_virtual(s)) {
      const auto [origin, head] = dag_.virtual_origin(s);
      const int slot = child_slot_checked(origin, head);
      const double v = ctx_.raw_head(origin, dag_.child_actions(origin)[slot]);
      return {v, v};  // equal by construction: no loss, no gradient
    }
    // log_pf: inflow
    const auto parents = dag_.parents(s);
    const auto pslots = dag_.parent_child_slots(s);
    std::vector<double> in_terms(parents.size());
    for (std::size_t k = 0; k < parents.size(); ++k)
      in_terms[k] = ctx_.raw_head(parents[k], dag_.child_actions(parents[k])[pslots[k]]);
    const double log_pf = logsumexp(in_terms);
    if (up_.active && up_.d_pf != 0.0 && std::isfinite(log_pf)) {
      for (std::size_t k = 0; k < parents.size(); ++k)
        ctx_.add_d_raw(parents[k], dag_.child_actions(parents[k])[pslots[k]],
                       up_.d_pf * std::exp(in_terms[k] - log_pf));
    }
    // log_pb: reward plus non-sink outflow
    const auto children = dag_.children(s);
    const auto actions = dag_.child_actions(s);
    std::vector<double> out_terms;
    std::vector<std::int32_t> out_actions;
    out_terms.push_back(dag_.log_reward(s));
    out_actions.push_back(-1);
    for (std::size_t k = 0; k < children.size(); ++k) {
      if (children[k] == dag_.sink()) continue;
      out_terms.push_back(ctx_.raw_head(s, actions[k]));
      out_actions.push_back(actions[k]);
    }
    const double log_pb = logsumexp(out_terms);
    if (up_.active && up_.d_pb != 0.0 && std::isfinite(log_pb)) {
      for (std::size_t k = 0; k < out_terms.size(); ++k)
        if (out_actions[k] >= 0)
          ctx_.add_d_raw(s, out_actions[k], up_.d_pb * std::exp(out_terms[k] - log_pb));
    }
    return {log_pf, log_pb};
  }

  FlowPair db_edge(StateId from, StateId to) {
    if (kind_.variant == ObjectiveVariant::MOD_DB) check_modified_precondition();
    // virtual chains: the forward flow is the chain flow; inner transitions
    // carry equal pairs
    if (dag_.is_virtual(from)) {
      const auto [origin, head] = dag_.virtual_origin(from);
      const int slot = child_slot_checked(origin, head);
      const double log_pf = flow_factor(origin, up_.d_pf) + term_log_pf(origin, slot, up_.d_pf);
      return db_pb_side(origin, from, to, log_pf);
    }
    const int slot = child_slot_checked(from, to);
    const double log_pf = flow_factor(from, up_.d_pf) + term_log_pf(from, slot, up_.d_pf);
    return db_pb_side(from, from, to, log_pf);
  }

  // reward_state: whose reward feeds the sink case (the chain origin for
  // virtual chains)
  FlowPair db_pb_side(StateId reward_state, StateId from, StateId to, double log_pf) {
    if (dag_.is_virtual(to)) return {log_pf, log_pf};
    if (to == dag_.sink()) return {log_pf, dag_.log_reward(reward_state)};
    const int pslot = dag_.parent_slot(to, from);
    const double log_pb = flow_factor(to, up_.d_pb) + term_log_pb_edge(to, pslot, up_.d_pb);
    return {log_pf, log_pb};
  }

  FlowPair tb_traj(const Trajectory& traj) {
    const std::size_t T = traj.size() - 1;  // edges
    double log_pf = term_log_z(up_.d_pf);
    for (std::size_t t = 0; t < T; ++t)
      log_pf += term_log_pf(traj[t], child_slot_checked(traj[t], traj[t + 1]), up_.d_pf);
    double log_pb = dag_.log_reward(traj[T - 1]);
    for (std::size_t t = 1; t < T; ++t)
      log_pb += term_log_pb_edge(traj[t], dag_.parent_slot(traj[t], traj[t - 1]), up_.d_pb);
    return {log_pf, log_pb};
  }

  FlowPair stb_traj(const Trajectory& traj) {
    const std::size_t last = traj.size() - 1;
    for (std::size_t t = 0; t < last; ++t)
      require(traj[t] != dag_.sink(), "interior state of a partial trajectory is the sink");

    double log_pf = flow_factor(traj[0], up_.d_pf);
    for (std::size_t t = 0; t < last; ++t)
      log_pf += term_log_pf(traj[t], child_slot_checked(traj[t], traj[t + 1]), up_.d_pf);

    double log_pb;
    if (traj[last] == dag_.sink()) {
      log_pb = dag_.log_reward(traj[last - 1]);
      for (std::size_t t = 1; t < last; ++t)
        log_pb += term_log_pb_edge(traj[t], dag_.parent_slot(traj[t], traj[t - 1]), up_.d_pb);
    } else {
      log_pb = flow_factor(traj[last], up_.d_pb);
      for (std::size_t t = 1; t <= last; ++t)
        log_pb += term_log_pb_edge(traj[t], dag_.parent_slot(traj[t], traj[t - 1]), up_.d_pb);
    }
    return {log_pf, log_pb};
  }

  static double logsumexp(const std::vector<double>& terms) {
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - m);
    return m + std::log(sum);
  }
};

}  // namespace

FlowPair flow_pair(const ObjectiveKind& kind, EvalContext& ctx, const TrainObject& o) {
  Upstream up;
  return PairEval(kind, ctx, up).run(o);
}

void flow_pair_backward(const ObjectiveKind& kind, EvalContext& ctx, const TrainObject& o,
                        double d_log_pf, double d_log_pb) {
  Upstream up{d_log_pf, d_log_pb, true};
  PairEval(kind, ctx, up).run(o);
}

double unified_loss(const WeightedBatch& batch, const ObjectiveKind& kind, EvalContext& ctx,
                    const RegressionLoss& loss, const LossOptions& options, LossStats* stats,
                    bool with_grad) {
  double total = 0.0;
  for (const auto& [object, weight] : batch.items) {
    const FlowPair fp = flow_pair(kind, ctx, object);
    double t = fp.log_pb - fp.log_pf;
    if (std::isnan(t))
      fail(errc::numerical_divergence, "flow pair produced 0/0 in log space");
    if (options.clamp_bound > 0.0 && std::abs(t) > options.clamp_bound) {
      t = std::clamp(t, -options.clamp_bound, options.clamp_bound);
      if (stats) stats->clamp_events++;
    }
    total += weight * loss.g(t);
    if (with_grad) {
      const double up = weight * loss.g_prime(t);
      flow_pair_backward(kind, ctx, object, -up, up);
    }
  }
  return total;
}

std::vector<std::pair<Trajectory, double>> subtb_object_weights(const Trajectory& traj,
                                                                double lambda) {
  const std::size_t L = traj.size() - 1;
  std::vector<std::pair<Trajectory, double>> out;
  double norm = 0.0;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i + 1; j <= L; ++j) {
      out.push_back({Trajectory(traj.begin() + i, traj.begin() + j + 1),
                     std::pow(lambda, static_cast<double>(j - i))});
      norm += out.back().second;
    }
  for (auto& [sub, w] : out) w /= norm;
  return out;
}

}  // namespace gfn
