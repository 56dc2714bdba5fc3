#pragma once

#include <stdexcept>
#include <string>

namespace gfn {

enum class errc {
  // dag_core
  cycle_detected,
  unreachable_state,
  sink_not_reachable,
  negative_reward,
  all_rewards_zero,
  trajectory_budget_exceeded,
  policy_not_normalized,
  bad_dag_format,
  // losses
  unknown_loss,
  quadrature_failed,
  inconclusive_classification,
  key_mismatch,
  bad_expression,
  // objectives
  incompatible_object,
  missing_model_head,
  modified_variant_precondition_violated,
  // model
  graph_not_recorded,
  shape_mismatch,
  sink_has_no_children,
  checkpoint_mismatch,
  // envs
  coordinate_out_of_range,
  incomplete_sequence,
  // metrics
  too_large_for_exact,
  empty_window,
  length_mismatch,
  degenerate_constant_input,
  // oracle
  not_graded,
  infeasible_enumeration,
  non_convergence,
  // cli / runner
  bad_config,
  numerical_divergence,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace gfn
