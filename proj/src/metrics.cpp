#include "gfn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "gfn/envs.hpp"
#include "gfn/error.hpp"
#include "gfn/sampling.hpp"

namespace gfn {

std::vector<double> reward_distribution(const FlowDag& dag) {
  std::vector<double> pr(dag.num_states(), 0.0);
  const double total = dag.total_reward();
  for (StateId s : dag.terminating_states()) pr[s] = dag.reward(s) / total;
  return pr;
}

double l1_exact(Model& model, const FlowDag& dag) {
  if (dag.num_states() > (1 << 21))
    fail(errc::too_large_for_exact, "dag too large for the exact terminal distribution");
  const auto pt = exact_terminal_distribution(dag, policy_table(model, dag));
  const auto pr = reward_distribution(dag);
  double l1 = 0.0;
  for (StateId s : dag.terminating_states()) l1 += std::abs(pt[s] - pr[s]);
  return l1;
}

double l1_empirical(std::span<const StateId> window, const FlowDag& dag) {
  if (window.empty()) fail(errc::empty_window, "empty evaluation window");
  std::unordered_map<StateId, double> freq;
  const double inv = 1.0 / static_cast<double>(window.size());
  for (StateId s : window) freq[s] += inv;
  const auto pr = reward_distribution(dag);
  double l1 = 0.0;
  for (StateId s : dag.terminating_states()) {
    auto it = freq.find(s);
    const double f = it == freq.end() ? 0.0 : it->second;
    l1 += std::abs(f - pr[s]);
    if (it != freq.end()) freq.erase(it);
  }
  // windowed states that are not terminating states of this dag
  for (const auto& [s, f] : freq) l1 += f;
  return l1;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    fail(errc::degenerate_constant_input, "rank correlation of a constant sequence");
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman_rank_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(errc::length_mismatch, "length mismatch");
  if (a.size() < 2) fail(errc::length_mismatch, "need at least two observations");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double spearman_exact(Model& model, const FlowDag& dag) {
  const auto pt = exact_terminal_distribution(dag, policy_table(model, dag));
  const auto pr = reward_distribution(dag);
  std::vector<double> a, b;
  a.reserve(dag.terminating_states().size());
  b.reserve(a.capacity());
  for (StateId s : dag.terminating_states()) {
    a.push_back(pt[s]);
    b.push_back(pr[s]);
  }
  return spearman_rank_corr(a, b);
}

double spearman_mc(Model& model, const FlowDag& dag, std::span<const StateId> test_states,
                   std::int32_t num_samples, bool learned_backward, Rng& rng) {
  EvalContext ctx(model, dag);
  std::vector<double> estimates, rewards;
  estimates.reserve(test_states.size());
  for (StateId x : test_states) {
    double acc = 0.0;
    for (std::int32_t i = 0; i < num_samples; ++i) {
      const Trajectory traj = sample_backward_trajectory(dag, ctx, learned_backward, x, rng);
      // log P_F over the whole trajectory (terminal step included)
      double log_pf = 0.0;
      for (std::size_t t = 0; t + 1 < traj.size(); ++t)
        log_pf += ctx.log_forward(traj[t])[dag.child_slot(traj[t], traj[t + 1])];
      // log P_B over the interior edges (the backward path from x)
      double log_pb = 0.0;
      for (std::size_t t = 1; t + 1 < traj.size(); ++t) {
        const int pslot = dag.parent_slot(traj[t], traj[t - 1]);
        log_pb += learned_backward ? ctx.log_backward(traj[t])[pslot]
                                   : ctx.log_backward_uniform(traj[t]);
      }
      acc += std::exp(log_pf - log_pb);
    }
    estimates.push_back(acc / num_samples);
    rewards.push_back(dag.reward(x));
  }
  // constant estimates carry no ranking information
  try {
    return spearman_rank_corr(estimates, rewards);
  } catch (const Error& e) {
    if (e.code() == errc::degenerate_constant_input) return 0.0;
    throw;
  }
}

std::int32_t modes_found(const std::vector<std::uint64_t>& generated,
                         const std::vector<std::uint64_t>& targets, std::int32_t delta) {
  std::int32_t found = 0;
  for (std::uint64_t m : targets) {
    for (std::uint64_t x : generated) {
      if (hamming(x, m) <= delta) {
        ++found;
        break;
      }
    }
  }
  return found;
}

const char* const kCsvHeader =
    "step,trajectories,loss,objective,l1_exact,l1_empirical,spearman,modes_found,avg_reward,"
    "avg_topk_reward,seed";

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void append_csv_row(std::ostream& os, const EvalReport& r) {
  os << r.step << ',' << r.trajectories << ',' << fmt(r.loss) << ',' << r.objective << ',';
  if (r.l1_exact) os << fmt(*r.l1_exact);
  os << ',';
  if (r.l1_empirical) os << fmt(*r.l1_empirical);
  os << ',';
  if (r.spearman) os << fmt(*r.spearman);
  os << ',';
  if (r.modes_found) os << *r.modes_found;
  os << ',' << fmt(r.avg_reward) << ',';
  if (r.avg_top_k_reward) os << fmt(*r.avg_top_k_reward);
  os << ',' << r.seed << '\n';
}

}  // namespace gfn
