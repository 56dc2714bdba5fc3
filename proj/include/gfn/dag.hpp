#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gfn/error.hpp"

namespace gfn {

using StateId = std::int32_t;
constexpr StateId kNoState = -1;

// A trajectory is an ordered list of states; consecutive pairs must be edges
// of the owning dag. Complete iff it runs source -> sink.
using Trajectory = std::vector<StateId>;

// Immutable flow network. Build through FlowDagBuilder; adjacency is CSR with
// children sorted by target id and parents sorted by source id, which fixes
// logit ordering everywhere. Each edge carries a forward action id (an index
// into the model's forward head) and a backward action id (index into the
// backward head of the child state); both default to the slot position.
class FlowDag {
 public:
  StateId source() const { return source_; }
  StateId sink() const { return sink_; }
  std::int32_t num_states() const { return static_cast<std::int32_t>(child_off_.size()) - 1; }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(child_ids_.size()); }

  std::span<const StateId> children(StateId s) const {
    return {child_ids_.data() + child_off_[s], child_ids_.data() + child_off_[s + 1]};
  }
  std::span<const std::int32_t> child_actions(StateId s) const {
    return {child_act_.data() + child_off_[s], child_act_.data() + child_off_[s + 1]};
  }
  std::span<const StateId> parents(StateId s) const {
    return {parent_ids_.data() + parent_off_[s], parent_ids_.data() + parent_off_[s + 1]};
  }
  std::span<const std::int32_t> parent_actions(StateId s) const {
    return {parent_act_.data() + parent_off_[s], parent_act_.data() + parent_off_[s + 1]};
  }
  // slot of edge (parents(s)[k] -> s) within the parent's child list
  std::span<const std::int32_t> parent_child_slots(StateId s) const {
    return {parent_child_slot_.data() + parent_off_[s], parent_child_slot_.data() + parent_off_[s + 1]};
  }

  int child_slot(StateId s, StateId child) const;   // -1 when absent
  int parent_slot(StateId s, StateId parent) const; // -1 when absent

  bool is_terminating(StateId s) const { return child_slot(s, sink_) >= 0; }
  const std::vector<StateId>& terminating_states() const { return terminating_; }

  double reward(StateId s) const { return reward_[s]; }
  double log_reward(StateId s) const { return log_reward_[s]; }
  double total_reward() const { return total_reward_; }

  // modified-DB/STB precondition
  bool all_states_terminating_positive() const { return all_term_pos_; }

  // Reward extension to non-terminal states for forward-looking objectives;
  // negative infinity when the environment provides none.
  bool has_intermediate_rewards() const { return !log_intermediate_.empty(); }
  double log_intermediate_reward(StateId s) const;

  bool is_virtual(StateId s) const { return !virtual_origin_.empty() && virtual_origin_[s].first >= 0; }
  // (original edge's source state, first virtual state of the chain); the
  // chain flow lives on the origin's edge into the chain head
  std::pair<StateId, StateId> virtual_origin(StateId s) const { return virtual_origin_[s]; }

  std::int32_t num_forward_actions() const { return n_fwd_actions_; }
  std::int32_t num_backward_actions() const { return n_bwd_actions_; }

  bool trajectory_is_valid(const Trajectory& t) const;

 private:
  friend class FlowDagBuilder;

  StateId source_ = kNoState;
  StateId sink_ = kNoState;
  std::vector<std::int64_t> child_off_, parent_off_;
  std::vector<StateId> child_ids_, parent_ids_;
  std::vector<std::int32_t> child_act_, parent_act_, parent_child_slot_;
  std::vector<double> reward_, log_reward_;
  std::vector<double> log_intermediate_;
  std::vector<StateId> terminating_;
  std::vector<std::pair<StateId, StateId>> virtual_origin_;
  double total_reward_ = 0.0;
  bool all_term_pos_ = false;
  std::int32_t n_fwd_actions_ = 0, n_bwd_actions_ = 0;
};

class FlowDagBuilder {
 public:
  explicit FlowDagBuilder(std::int32_t num_states);

  FlowDagBuilder& set_source(StateId s);
  FlowDagBuilder& set_sink(StateId s);
  // action ids default to the (sorted) slot position when left at -1
  FlowDagBuilder& add_edge(StateId from, StateId to, std::int32_t fwd_action = -1,
                           std::int32_t bwd_action = -1);
  FlowDagBuilder& set_reward(StateId s, double r);
  FlowDagBuilder& set_log_intermediate_reward(StateId s, double log_r);
  FlowDagBuilder& mark_virtual(StateId s, StateId origin_state, StateId chain_head);

  // Validates all FlowDag invariants; throws Error on violation.
  FlowDag build() const;

 private:
  std::int32_t n_;
  StateId source_ = kNoState, sink_ = kNoState;
  struct E {
    StateId from, to;
    std::int32_t fa, ba;
  };
  std::vector<E> edges_;
  std::vector<std::pair<StateId, double>> rewards_;
  std::vector<std::pair<StateId, double>> intermediate_;
  std::vector<std::tuple<StateId, StateId, StateId>> virtuals_;
};

// Throws the matching Error unless every FlowDag invariant holds. build()
// already runs this; exposed for dags loaded from text.
void validate_dag(const FlowDag& dag);

// All complete trajectories in lexicographic (by state id) order.
// Throws trajectory_budget_exceeded when the count passes `cap`.
std::vector<Trajectory> enumerate_complete_trajectories(const FlowDag& dag,
                                                        std::int64_t cap = 1'000'000);

std::int64_t count_complete_trajectories(const FlowDag& dag);

// l(s): length of the longest source-to-s path.
std::vector<std::int32_t> layer_index(const FlowDag& dag);

bool is_graded(const FlowDag& dag);

// Returns a graded copy: every edge spanning k>1 layers gets k-1 virtual
// pass-through states. Virtual states keep a pointer to the original edge so
// flows through the chain equal the original edge flow and the inserted
// objects drop out of every loss.
FlowDag insert_virtual_states(const FlowDag& dag);

// Forward policy as per-state child-slot probabilities.
using PolicyTable = std::vector<std::vector<double>>;

// Terminating-probability vector (indexed by state id, zero off the
// terminating set) by forward mass propagation. Child probabilities must sum
// to 1 within 1e-12 per non-sink state.
std::vector<double> exact_terminal_distribution(const FlowDag& dag, const PolicyTable& policy);

// Line-oriented text format: "dag <n> <m>", "source <s>", "sink <s>",
// "edge <u> <v>", "reward <s> <value>".
void write_dag_text(std::ostream& os, const FlowDag& dag);
FlowDag read_dag_text(std::istream& is);
std::string dag_to_string(const FlowDag& dag);
FlowDag dag_from_string(const std::string& text);

}  // namespace gfn
