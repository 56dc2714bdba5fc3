#include "gfn/dag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

namespace gfn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<StateId> topological_order(const FlowDag& dag) {
  const std::int32_t n = dag.num_states();
  std::vector<std::int32_t> indeg(n, 0);
  for (StateId s = 0; s < n; ++s)
    for (StateId c : dag.children(s)) indeg[c]++;
  std::deque<StateId> frontier;
  for (StateId s = 0; s < n; ++s)
    if (indeg[s] == 0) frontier.push_back(s);
  std::vector<StateId> order;
  order.reserve(n);
  while (!frontier.empty()) {
    StateId s = frontier.front();
    frontier.pop_front();
    order.push_back(s);
    for (StateId c : dag.children(s))
      if (--indeg[c] == 0) frontier.push_back(c);
  }
  if (static_cast<std::int32_t>(order.size()) != n)
    fail(errc::cycle_detected, "flow dag contains a cycle");
  return order;
}

}  // namespace

int FlowDag::child_slot(StateId s, StateId child) const {
  auto ch = children(s);
  auto it = std::lower_bound(ch.begin(), ch.end(), child);
  if (it == ch.end() || *it != child) return -1;
  return static_cast<int>(it - ch.begin());
}

int FlowDag::parent_slot(StateId s, StateId parent) const {
  auto pa = parents(s);
  auto it = std::lower_bound(pa.begin(), pa.end(), parent);
  if (it == pa.end() || *it != parent) return -1;
  return static_cast<int>(it - pa.begin());
}

double FlowDag::log_intermediate_reward(StateId s) const {
  if (log_intermediate_.empty()) return kNegInf;
  return log_intermediate_[s];
}

bool FlowDag::trajectory_is_valid(const Trajectory& t) const {
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (child_slot(t[i], t[i + 1]) < 0) return false;
  return true;
}

FlowDagBuilder::FlowDagBuilder(std::int32_t num_states) : n_(num_states) {}

FlowDagBuilder& FlowDagBuilder::set_source(StateId s) {
  source_ = s;
  return *this;
}
FlowDagBuilder& FlowDagBuilder::set_sink(StateId s) {
  sink_ = s;
  return *this;
}
FlowDagBuilder& FlowDagBuilder::add_edge(StateId from, StateId to, std::int32_t fwd_action,
                                         std::int32_t bwd_action) {
  edges_.push_back({from, to, fwd_action, bwd_action});
  return *this;
}
FlowDagBuilder& FlowDagBuilder::set_reward(StateId s, double r) {
  rewards_.push_back({s, r});
  return *this;
}
FlowDagBuilder& FlowDagBuilder::set_log_intermediate_reward(StateId s, double log_r) {
  intermediate_.push_back({s, log_r});
  return *this;
}
FlowDagBuilder& FlowDagBuilder::mark_virtual(StateId s, StateId origin_state,
                                             StateId chain_head) {
  virtuals_.push_back({s, origin_state, chain_head});
  return *this;
}

FlowDag FlowDagBuilder::build() const {
  if (source_ < 0 || source_ >= n_ || sink_ < 0 || sink_ >= n_ || source_ == sink_)
    fail(errc::bad_dag_format, "source/sink missing or identical");
  FlowDag dag;
  dag.source_ = source_;
  dag.sink_ = sink_;

  std::vector<std::int64_t> cdeg(n_ + 1, 0), pdeg(n_ + 1, 0);
  for (const auto& e : edges_) {
    if (e.from < 0 || e.from >= n_ || e.to < 0 || e.to >= n_)
      fail(errc::bad_dag_format, "edge endpoint out of range");
    cdeg[e.from + 1]++;
    pdeg[e.to + 1]++;
  }
  dag.child_off_.assign(n_ + 1, 0);
  dag.parent_off_.assign(n_ + 1, 0);
  std::partial_sum(cdeg.begin(), cdeg.end(), dag.child_off_.begin());
  std::partial_sum(pdeg.begin(), pdeg.end(), dag.parent_off_.begin());

  const std::int64_t m = static_cast<std::int64_t>(edges_.size());
  // sort edges per state; keep action ids attached
  std::vector<std::tuple<StateId, std::int32_t, std::int32_t>> tmp;  // (to, fa, ba)
  dag.child_ids_.assign(m, 0);
  dag.child_act_.assign(m, 0);
  dag.parent_ids_.assign(m, 0);
  dag.parent_act_.assign(m, 0);
  dag.parent_child_slot_.assign(m, 0);

  std::vector<std::vector<std::tuple<StateId, std::int32_t, std::int32_t>>> by_from(n_), by_to(n_);
  for (const auto& e : edges_) {
    by_from[e.from].push_back({e.to, e.fa, e.ba});
    by_to[e.to].push_back({e.from, e.fa, e.ba});
  }
  for (StateId s = 0; s < n_; ++s) {
    auto& out = by_from[s];
    std::sort(out.begin(), out.end());
    for (std::size_t i = 1; i < out.size(); ++i)
      if (std::get<0>(out[i]) == std::get<0>(out[i - 1]))
        fail(errc::bad_dag_format, "duplicate edge");
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::int64_t at = dag.child_off_[s] + static_cast<std::int64_t>(i);
      dag.child_ids_[at] = std::get<0>(out[i]);
      const std::int32_t fa = std::get<1>(out[i]);
      dag.child_act_[at] = fa < 0 ? static_cast<std::int32_t>(i) : fa;
    }
    auto& in = by_to[s];
    std::sort(in.begin(), in.end());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const std::int64_t at = dag.parent_off_[s] + static_cast<std::int64_t>(i);
      dag.parent_ids_[at] = std::get<0>(in[i]);
      const std::int32_t ba = std::get<2>(in[i]);
      dag.parent_act_[at] = ba < 0 ? static_cast<std::int32_t>(i) : ba;
    }
  }
  for (StateId s = 0; s < n_; ++s) {
    auto pa = dag.parents(s);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      int slot = dag.child_slot(pa[i], s);
      dag.parent_child_slot_[dag.parent_off_[s] + static_cast<std::int64_t>(i)] =
          static_cast<std::int32_t>(slot);
    }
  }

  dag.n_fwd_actions_ = 0;
  for (auto a : dag.child_act_) dag.n_fwd_actions_ = std::max(dag.n_fwd_actions_, a + 1);
  dag.n_bwd_actions_ = 0;
  for (auto a : dag.parent_act_) dag.n_bwd_actions_ = std::max(dag.n_bwd_actions_, a + 1);

  dag.reward_.assign(n_, 0.0);
  dag.log_reward_.assign(n_, kNegInf);
  for (auto [s, r] : rewards_) {
    dag.reward_[s] = r;
    dag.log_reward_[s] = r > 0.0 ? std::log(r) : kNegInf;
  }
  if (!intermediate_.empty()) {
    dag.log_intermediate_.assign(n_, kNegInf);
    for (auto [s, lr] : intermediate_) dag.log_intermediate_[s] = lr;
  }
  if (!virtuals_.empty()) {
    dag.virtual_origin_.assign(n_, {kNoState, kNoState});
    for (auto [s, o, head] : virtuals_) dag.virtual_origin_[s] = {o, head};
  }

  for (StateId s = 0; s < n_; ++s)
    if (dag.child_slot(s, sink_) >= 0) dag.terminating_.push_back(s);
  dag.total_reward_ = 0.0;
  for (StateId s : dag.terminating_) dag.total_reward_ += dag.reward_[s];
  dag.all_term_pos_ =
      static_cast<std::int64_t>(dag.terminating_.size()) == n_ - 1;
  if (dag.all_term_pos_)
    for (StateId s : dag.terminating_)
      if (!(dag.reward_[s] > 0.0)) dag.all_term_pos_ = false;

  validate_dag(dag);
  return dag;
}

void validate_dag(const FlowDag& dag) {
  const std::int32_t n = dag.num_states();
  topological_order(dag);  // throws on cycles

  if (!dag.children(dag.sink()).empty()) fail(errc::bad_dag_format, "sink has outgoing edges");

  // forward reachability from source
  {
    std::vector<char> seen(n, 0);
    std::deque<StateId> q{dag.source()};
    seen[dag.source()] = 1;
    while (!q.empty()) {
      StateId s = q.front();
      q.pop_front();
      for (StateId c : dag.children(s))
        if (!seen[c]) {
          seen[c] = 1;
          q.push_back(c);
        }
    }
    for (StateId s = 0; s < n; ++s)
      if (!seen[s])
        fail(errc::unreachable_state, "state " + std::to_string(s) + " unreachable from source");
  }
  // sink reachability from everything
  {
    std::vector<char> seen(n, 0);
    std::deque<StateId> q{dag.sink()};
    seen[dag.sink()] = 1;
    while (!q.empty()) {
      StateId s = q.front();
      q.pop_front();
      for (StateId p : dag.parents(s))
        if (!seen[p]) {
          seen[p] = 1;
          q.push_back(p);
        }
    }
    for (StateId s = 0; s < n; ++s)
      if (!seen[s])
        fail(errc::sink_not_reachable, "sink not reachable from state " + std::to_string(s));
  }

  double total = 0.0;
  for (StateId s = 0; s < n; ++s) {
    const double r = dag.reward(s);
    if (r < 0.0) fail(errc::negative_reward, "reward of state " + std::to_string(s) + " negative");
    if (r != 0.0 && !dag.is_terminating(s))
      fail(errc::bad_dag_format, "reward on non-terminating state " + std::to_string(s));
    total += r;
  }
  if (!(total > 0.0)) fail(errc::all_rewards_zero, "all rewards are zero");
}

namespace {

void enumerate_rec(const FlowDag& dag, StateId s, Trajectory& path, std::vector<Trajectory>& out,
                   std::int64_t cap) {
  if (s == dag.sink()) {
    if (static_cast<std::int64_t>(out.size()) >= cap)
      fail(errc::trajectory_budget_exceeded,
           "trajectory count exceeds cap of " + std::to_string(cap));
    out.push_back(path);
    return;
  }
  for (StateId c : dag.children(s)) {
    path.push_back(c);
    enumerate_rec(dag, c, path, out, cap);
    path.pop_back();
  }
}

}  // namespace

std::vector<Trajectory> enumerate_complete_trajectories(const FlowDag& dag, std::int64_t cap) {
  std::vector<Trajectory> out;
  Trajectory path{dag.source()};
  enumerate_rec(dag, dag.source(), path, out, cap);
  return out;
}

std::int64_t count_complete_trajectories(const FlowDag& dag) {
  const auto order = topological_order(dag);
  std::vector<std::int64_t> paths(dag.num_states(), 0);
  paths[dag.source()] = 1;
  constexpr std::int64_t kSat = std::numeric_limits<std::int64_t>::max() / 2;
  for (StateId s : order)
    for (StateId c : dag.children(s)) paths[c] = std::min(kSat, paths[c] + paths[s]);
  return paths[dag.sink()];
}

std::vector<std::int32_t> layer_index(const FlowDag& dag) {
  const auto order = topological_order(dag);
  std::vector<std::int32_t> layer(dag.num_states(), 0);
  for (StateId s : order)
    for (StateId c : dag.children(s)) layer[c] = std::max(layer[c], layer[s] + 1);
  return layer;
}

bool is_graded(const FlowDag& dag) {
  const auto layer = layer_index(dag);
  for (StateId s = 0; s < dag.num_states(); ++s)
    for (StateId c : dag.children(s))
      if (layer[c] != layer[s] + 1) return false;
  return true;
}

FlowDag insert_virtual_states(const FlowDag& dag) {
  const auto layer = layer_index(dag);
  const std::int32_t n = dag.num_states();

  std::int32_t extra = 0;
  for (StateId s = 0; s < n; ++s)
    for (StateId c : dag.children(s)) extra += layer[c] - layer[s] - 1;
  if (extra == 0) return dag;

  FlowDagBuilder b(n + extra);
  b.set_source(dag.source()).set_sink(dag.sink());
  for (StateId s : dag.terminating_states()) b.set_reward(s, dag.reward(s));
  if (dag.has_intermediate_rewards())
    for (StateId s = 0; s < n; ++s) b.set_log_intermediate_reward(s, dag.log_intermediate_reward(s));

  StateId next = n;
  for (StateId s = 0; s < n; ++s) {
    auto ch = dag.children(s);
    for (std::size_t k = 0; k < ch.size(); ++k) {
      const StateId c = ch[k];
      const std::int32_t gap = layer[c] - layer[s] - 1;
      if (gap == 0) {
        b.add_edge(s, c);
        continue;
      }
      StateId prev = s;
      const StateId head = next;
      for (std::int32_t i = 0; i < gap; ++i) {
        const StateId v = next++;
        b.add_edge(prev, v);
        b.mark_virtual(v, s, head);
        prev = v;
      }
      b.add_edge(prev, c);
    }
  }
  return b.build();
}

std::vector<double> exact_terminal_distribution(const FlowDag& dag, const PolicyTable& policy) {
  const std::int32_t n = dag.num_states();
  for (StateId s = 0; s < n; ++s) {
    if (s == dag.sink()) continue;
    const auto& row = policy[s];
    if (row.size() != dag.children(s).size())
      fail(errc::policy_not_normalized, "policy row size mismatch at state " + std::to_string(s));
    double sum = 0.0;
    for (double p : row) sum += p;
    if (std::abs(sum - 1.0) > 1e-12)
      fail(errc::policy_not_normalized,
           "child probabilities at state " + std::to_string(s) + " sum to " + std::to_string(sum));
  }
  const auto order = topological_order(dag);
  std::vector<double> mass(n, 0.0), pt(n, 0.0);
  mass[dag.source()] = 1.0;
  for (StateId s : order) {
    if (s == dag.sink()) continue;
    auto ch = dag.children(s);
    for (std::size_t k = 0; k < ch.size(); ++k) {
      const double flow = mass[s] * policy[s][k];
      if (ch[k] == dag.sink())
        pt[s] += flow;
      else
        mass[ch[k]] += flow;
    }
  }
  return pt;
}

void write_dag_text(std::ostream& os, const FlowDag& dag) {
  os << "dag " << dag.num_states() << " " << dag.num_edges() << "\n";
  os << "source " << dag.source() << "\n";
  os << "sink " << dag.sink() << "\n";
  for (StateId s = 0; s < dag.num_states(); ++s)
    for (StateId c : dag.children(s)) os << "edge " << s << " " << c << "\n";
  char buf[64];
  for (StateId s : dag.terminating_states()) {
    std::snprintf(buf, sizeof buf, "%.17g", dag.reward(s));
    os << "reward " << s << " " << buf << "\n";
  }
}

FlowDag read_dag_text(std::istream& is) {
  std::string tok;
  if (!(is >> tok) || tok != "dag") fail(errc::bad_dag_format, "expected 'dag' header");
  std::int64_t n = 0, m = 0;
  if (!(is >> n >> m) || n <= 0) fail(errc::bad_dag_format, "bad dag header");
  FlowDagBuilder b(static_cast<std::int32_t>(n));
  bool have_source = false, have_sink = false;
  while (is >> tok) {
    if (tok == "source") {
      StateId s;
      is >> s;
      b.set_source(s);
      have_source = true;
    } else if (tok == "sink") {
      StateId s;
      is >> s;
      b.set_sink(s);
      have_sink = true;
    } else if (tok == "edge") {
      StateId u, v;
      if (!(is >> u >> v)) fail(errc::bad_dag_format, "bad edge line");
      b.add_edge(u, v);
    } else if (tok == "reward") {
      StateId s;
      double r;
      if (!(is >> s >> r)) fail(errc::bad_dag_format, "bad reward line");
      b.set_reward(s, r);
    } else {
      fail(errc::bad_dag_format, "unknown directive '" + tok + "'");
    }
  }
  if (!have_source || !have_sink) fail(errc::bad_dag_format, "missing source/sink");
  return b.build();
}

std::string dag_to_string(const FlowDag& dag) {
  std::ostringstream os;
  write_dag_text(os, dag);
  return os.str();
}

FlowDag dag_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_dag_text(is);
}

}  // namespace gfn
