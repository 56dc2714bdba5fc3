#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/losses.hpp"
#include "gfn/model.hpp"
#include "gfn/objectives.hpp"

namespace gfn {

struct Cut {
  enum class Kind { state_layer, edge_layer, partial_layer, complete_trajectory };
  Kind kind;
  double weight;
  // states and edges are trajectories of length 1 and 2
  std::vector<Trajectory> members;
};

struct CutFamily {
  std::vector<Cut> cuts;
};

// The layered minimal-cut families of a graded dag, weighted per objective
// family: state layers (weight 1) for FM, edge layers (weight 1) for DB, the
// single complete-trajectory cut for TB, and all layer-spans i<j with weights
// lambda^(j-i)/sum for STB.
CutFamily layered_cut_families(const FlowDag& graded, ObjectiveVariant family, double lambda);

// Exact flows of a (log Z, forward logits | rewards, backward logits)
// tabular model, materialized by complete-trajectory enumeration. Forward
// side: F(tau) = Z * prod P_F; backward side: B(tau) = R(last) * prod P_B.
// Restrictions to cut members are sums over containing trajectories.
class FlowEnumeration {
 public:
  FlowEnumeration(const FlowDag& graded, EvalContext& ctx, std::int64_t cap = 50'000);

  const std::vector<Trajectory>& trajectories() const { return trajs_; }
  std::int32_t num_layers() const { return layers_; }

  double forward_mass(const Trajectory& member) const;
  double backward_mass(const Trajectory& member) const;
  const std::vector<std::int32_t>& containing(const Trajectory& member) const;

  // accumulate coef[t] * d log F(tau_t) and d log B(tau_t) into the context
  void apply_gradients(EvalContext& ctx, std::span<const double> coef_forward,
                       std::span<const double> coef_backward) const;

  double forward_of(std::int32_t t) const { return f_[t]; }
  double backward_of(std::int32_t t) const { return b_[t]; }
  double log_forward_of(std::int32_t t) const { return log_f_[t]; }
  double log_backward_of(std::int32_t t) const { return log_b_[t]; }

 private:
  const FlowDag& dag_;
  std::vector<Trajectory> trajs_;
  std::vector<double> log_f_, log_b_, f_, b_;
  std::vector<std::int32_t> layer_;
  std::int32_t layers_ = 0;
  mutable std::vector<std::int32_t> scratch_members_;
};

// sum_C w(C) D_f(B^C || F^C) over the family, flows unnormalized.
double divergence_objective(const FlowDag& graded, EvalContext& ctx, const CutFamily& family,
                            const FDivergenceSpec& f, std::int64_t cap = 50'000);

enum class MuWeighting { forward, backward };
enum class DiffSide { forward_params, backward_params };

struct CorrespondenceCase {
  MuWeighting weighting;
  DiffSide differentiated;
  int f_builder;  // index into dual_divergence
};

// the four admissible (weighting, side, dual) combinations
std::array<CorrespondenceCase, 4> correspondence_cases();

struct CorrespondenceReport {
  double max_abs_grad_lhs = 0.0;
  double max_rel_error = 0.0;
  std::vector<double> per_parameter_errors;
  bool pass = false;
};

// Exact-gradient comparison: LHS is the unified objective with mu set
// exactly to flow(o) * sum of containing cut weights (mu frozen at the
// current parameters), RHS the weighted divergence sum with the case's dual
// f. Gradients restricted to the case's parameter side.
CorrespondenceReport verify_grad_correspondence(const FlowDag& graded, TabularModel& model,
                                                const RegressionLoss& g,
                                                const CorrespondenceCase& kase,
                                                ObjectiveVariant family, double lambda, double tol);

// model head layout the oracle expects (forward logits + backward logits +
// total flow)
HeadLayout oracle_layout(const FlowDag& dag);

// Direct gradient of sum_tau [F log(F/B) + B - F] with respect to the
// forward-side parameters; the cross-check target for the quadratic/TB case.
std::vector<double> reverse_kl_forward_gradient(const FlowDag& graded, TabularModel& model);

struct ZeroBehaviorResult {
  double p_branch;      // converged P(A)
  double grid_argmin;   // scalar grid-search optimum of the same objective
  std::int64_t iterations;
};

// Constrained-tree instance: trainable root split a = P(A); branch A splits
// 50/50 (frozen) into rewards (1, 0), branch B reaches reward 1; Z frozen at
// 2. Minimizes the exact trajectory-cut objective (log of the zero reward
// floored at -30) by gradient descent with line search, and grid-searches
// the equivalent divergence at step 1e-4.
ZeroBehaviorResult zero_behavior_test(const RegressionLoss& g, std::int64_t max_iters = 1'000'000);

}  // namespace gfn
