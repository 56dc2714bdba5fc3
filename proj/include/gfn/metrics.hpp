#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/model.hpp"
#include "gfn/rng.hpp"

namespace gfn {

struct EvalReport {
  std::int64_t step = 0;
  std::int64_t trajectories = 0;
  double loss = 0.0;
  std::string objective;
  std::optional<double> l1_exact;
  std::optional<double> l1_empirical;
  std::optional<double> spearman;
  std::optional<std::int32_t> modes_found;
  double avg_reward = 0.0;
  std::optional<double> avg_top_k_reward;
  std::uint64_t seed = 0;
};

// normalized reward distribution over terminating states (dense by state id)
std::vector<double> reward_distribution(const FlowDag& dag);

// sum_s |P_T(s) - P_R(s)| from the exact terminal distribution of the
// model's policy; too_large_for_exact above ~2M states
double l1_exact(Model& model, const FlowDag& dag);

// L1 between the windowed empirical terminal frequencies and P_R over the
// union of supports
double l1_empirical(std::span<const StateId> window, const FlowDag& dag);

// Spearman rank correlation with average-rank tie handling.
double spearman_rank_corr(std::span<const double> a, std::span<const double> b);

// exact P_T (full enumeration / dynamic programming) vs P_R over all
// terminating states
double spearman_exact(Model& model, const FlowDag& dag);

// Monte-Carlo P_T estimate per test state: mean over N backward-sampled
// trajectories of P_F(tau)/P_B(tau|x); then rank correlation against P_R.
double spearman_mc(Model& model, const FlowDag& dag, std::span<const StateId> test_states,
                   std::int32_t num_samples, bool learned_backward, Rng& rng);

// |{m in targets : exists x in generated with d(x, m) <= delta}|
std::int32_t modes_found(const std::vector<std::uint64_t>& generated,
                         const std::vector<std::uint64_t>& targets, std::int32_t delta);

extern const char* const kCsvHeader;
void append_csv_row(std::ostream& os, const EvalReport& report);

}  // namespace gfn
