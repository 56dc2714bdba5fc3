#include "gfn/envs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "gfn/error.hpp"

namespace gfn {

// ---------------------------------------------------------------------------
// hyper-grid

double hypergrid_reward(std::span<const std::int32_t> x, const HypergridSpec& spec) {
  // |x/H - 0.5| = m/(2H) with m = |2x - H|, compared in integers so the
  // strict boundaries land exactly: >1/4 is 2m > H, (3/10, 2/5) is 3H < 5m < 4H
  double prod_outer = 1.0, prod_ring = 1.0;
  for (std::int32_t d = 0; d < spec.D; ++d) {
    if (x[d] < 0 || x[d] >= spec.H)
      fail(errc::coordinate_out_of_range, "coordinate " + std::to_string(x[d]) + " outside grid");
    const std::int64_t m = std::abs(std::int64_t{2} * x[d] - spec.H);
    if (!(2 * m > spec.H)) prod_outer = 0.0;
    if (!(5 * m > 3 * std::int64_t{spec.H} && 5 * m < 4 * std::int64_t{spec.H})) prod_ring = 0.0;
  }
  return spec.R0 + spec.R1 * prod_outer + spec.R2 * prod_ring;
}

std::vector<HypergridAction> hypergrid_children(std::span<const std::int32_t> x,
                                                const HypergridSpec& spec) {
  std::vector<HypergridAction> out;
  for (std::int32_t d = 0; d < spec.D; ++d)
    if (x[d] + 1 < spec.H) out.push_back({d, false});
  out.push_back({spec.D, true});
  return out;
}

std::int64_t hypergrid_state_index(std::span<const std::int32_t> x, const HypergridSpec& spec) {
  std::int64_t idx = 0;
  for (std::int32_t d = spec.D - 1; d >= 0; --d) idx = idx * spec.H + x[d];
  return idx;
}

std::vector<std::int32_t> hypergrid_coords(std::int64_t index, const HypergridSpec& spec) {
  std::vector<std::int32_t> x(spec.D);
  for (std::int32_t d = 0; d < spec.D; ++d) {
    x[d] = static_cast<std::int32_t>(index % spec.H);
    index /= spec.H;
  }
  return x;
}

FlowDag make_hypergrid_dag(const HypergridSpec& spec) {
  std::int64_t cells = 1;
  for (std::int32_t d = 0; d < spec.D; ++d) cells *= spec.H;
  const StateId sink = static_cast<StateId>(cells);
  FlowDagBuilder b(static_cast<std::int32_t>(cells) + 1);
  b.set_source(0).set_sink(sink);

  std::vector<std::int32_t> x(spec.D);
  std::int64_t stride = 1;
  std::vector<std::int64_t> strides(spec.D);
  for (std::int32_t d = 0; d < spec.D; ++d) {
    strides[d] = stride;
    stride *= spec.H;
  }
  for (std::int64_t idx = 0; idx < cells; ++idx) {
    const auto coords = hypergrid_coords(idx, spec);
    for (const auto& action : hypergrid_children(coords, spec)) {
      if (action.is_stop) {
        b.add_edge(static_cast<StateId>(idx), sink, spec.D, 0);
      } else {
        b.add_edge(static_cast<StateId>(idx),
                   static_cast<StateId>(idx + strides[action.action]), action.action,
                   action.action);
      }
    }
    const double r = hypergrid_reward(coords, spec);
    b.set_reward(static_cast<StateId>(idx), r);
    b.set_log_intermediate_reward(static_cast<StateId>(idx), std::log(r));
  }
  return b.build();
}

Encoder hypergrid_encoder(const HypergridSpec& spec) {
  return [spec](StateId s, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const auto coords = hypergrid_coords(s, spec);
    for (std::int32_t d = 0; d < spec.D; ++d) out[d * spec.H + coords[d]] = 1.0;
  };
}

// ---------------------------------------------------------------------------
// bit-sequence

std::int32_t bitseq_slots(const BitSeqSpec& spec) {
  if (spec.k <= 0 || spec.n % spec.k != 0)
    fail(errc::bad_config, "bit-sequence needs word length k dividing n");
  return spec.n / spec.k;
}

namespace {
std::int64_t bitseq_base(const BitSeqSpec& spec) { return (std::int64_t{1} << spec.k) + 1; }
}  // namespace

std::int64_t bitseq_num_states(const BitSeqSpec& spec) {
  const std::int32_t slots = bitseq_slots(spec);
  std::int64_t n = 1;
  for (std::int32_t i = 0; i < slots; ++i) n *= bitseq_base(spec);
  return n;
}

bool bitseq_is_full(std::int64_t index, const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  for (std::int32_t i = 0; i < bitseq_slots(spec); ++i) {
    if (index % base == 0) return false;
    index /= base;
  }
  return true;
}

std::uint64_t bitseq_bits(std::int64_t index, const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  std::uint64_t bits = 0;
  for (std::int32_t i = 0; i < bitseq_slots(spec); ++i) {
    const std::int64_t v = index % base;
    index /= base;
    if (v == 0) fail(errc::incomplete_sequence, "state has empty words");
    bits |= static_cast<std::uint64_t>(v - 1) << (i * spec.k);
  }
  return bits;
}

std::vector<StateId> bitseq_children(std::int64_t index, const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  const std::int32_t slots = bitseq_slots(spec);
  std::vector<StateId> out;
  std::int64_t digit = 1;
  std::int64_t rest = index;
  bool full = true;
  for (std::int32_t i = 0; i < slots; ++i) {
    if (rest % base == 0) {
      full = false;
      for (std::int64_t w = 0; w < (std::int64_t{1} << spec.k); ++w)
        out.push_back(static_cast<StateId>(index + (w + 1) * digit));
    }
    rest /= base;
    digit *= base;
  }
  if (full) out.push_back(static_cast<StateId>(bitseq_num_states(spec)));  // sink
  return out;
}

std::vector<StateId> bitseq_parents(std::int64_t index, const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  const std::int32_t slots = bitseq_slots(spec);
  std::vector<StateId> out;
  std::int64_t digit = 1;
  std::int64_t rest = index;
  for (std::int32_t i = 0; i < slots; ++i) {
    const std::int64_t v = rest % base;
    if (v != 0) out.push_back(static_cast<StateId>(index - v * digit));
    rest /= base;
    digit *= base;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int32_t hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

double bitseq_reward(std::int64_t index, const BitSeqSpec& spec) {
  const std::uint64_t bits = bitseq_bits(index, spec);  // throws when incomplete
  std::int32_t best = spec.n + 1;
  for (std::uint64_t m : spec.targets) best = std::min(best, hamming(bits, m));
  return std::exp(-spec.beta * best);
}

double bitseq_log_intermediate_reward(std::int64_t index, const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  const std::int32_t slots = bitseq_slots(spec);
  std::uint64_t bits = 0;
  std::uint64_t empty_mask = 0;  // 1s across empty word positions
  std::int64_t rest = index;
  for (std::int32_t i = 0; i < slots; ++i) {
    const std::int64_t v = rest % base;
    rest /= base;
    const std::uint64_t word_mask = ((std::uint64_t{1} << spec.k) - 1) << (i * spec.k);
    if (v == 0)
      empty_mask |= word_mask;
    else
      bits |= static_cast<std::uint64_t>(v - 1) << (i * spec.k);
  }
  const std::int32_t empties = std::popcount(empty_mask);
  std::int32_t best = spec.n + 1;
  for (std::uint64_t m : spec.targets)
    best = std::min(best, hamming(bits & ~empty_mask, m & ~empty_mask) + empties);
  return -spec.beta * best;
}

std::vector<std::uint64_t> bitseq_random_targets(std::int32_t n, std::int32_t count, Rng rng) {
  if (n > 60) fail(errc::bad_config, "bit-sequence supports up to 60 bits");
  std::set<std::uint64_t> seen;
  std::vector<std::uint64_t> out;
  const std::uint64_t space = std::uint64_t{1} << n;
  while (static_cast<std::int32_t>(out.size()) < count) {
    const std::uint64_t x = rng.next_below(space);
    if (seen.insert(x).second) out.push_back(x);
  }
  return out;
}

FlowDag make_bitseq_dag(const BitSeqSpec& spec) {
  const std::int64_t num_states = bitseq_num_states(spec);
  if (num_states > (std::int64_t{1} << 22))
    fail(errc::too_large_for_exact, "bit-sequence instance too large to materialize");
  const std::int64_t base = bitseq_base(spec);
  const std::int32_t slots = bitseq_slots(spec);
  const StateId sink = static_cast<StateId>(num_states);

  FlowDagBuilder b(static_cast<std::int32_t>(num_states) + 1);
  b.set_source(0).set_sink(sink);
  const std::int32_t fill_actions = slots * (1 << spec.k);
  for (std::int64_t idx = 0; idx < num_states; ++idx) {
    std::int64_t digit = 1;
    std::int64_t rest = idx;
    bool full = true;
    for (std::int32_t i = 0; i < slots; ++i) {
      const std::int64_t v = rest % base;
      if (v == 0) {
        full = false;
        for (std::int64_t w = 0; w < (std::int64_t{1} << spec.k); ++w)
          b.add_edge(static_cast<StateId>(idx), static_cast<StateId>(idx + (w + 1) * digit),
                     static_cast<std::int32_t>(i * (std::int64_t{1} << spec.k) + w),
                     /*bwd_action=*/i);
      }
      rest /= base;
      digit *= base;
    }
    if (full) {
      b.add_edge(static_cast<StateId>(idx), sink, fill_actions, 0);
      b.set_reward(static_cast<StateId>(idx), bitseq_reward(idx, spec));
    }
    b.set_log_intermediate_reward(static_cast<StateId>(idx),
                                  bitseq_log_intermediate_reward(idx, spec));
  }
  return b.build();
}

Encoder bitseq_encoder(const BitSeqSpec& spec) {
  const std::int64_t base = bitseq_base(spec);
  const std::int32_t slots = bitseq_slots(spec);
  return [spec, base, slots](StateId s, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    std::int64_t rest = s;
    for (std::int32_t i = 0; i < slots; ++i) {
      out[i * base + rest % base] = 1.0;
      rest /= base;
    }
  };
}

// ---------------------------------------------------------------------------
// random graded dags

namespace {

FlowDag random_layered(const RandomDagSpec& spec, bool all_terminating) {
  Rng rng(Rng::mix(spec.seed ^ 0x5eedull));
  const std::int32_t L = spec.layers, W = spec.width;
  const std::int32_t n = 1 + L * W + 1;
  const StateId sink = n - 1;
  FlowDagBuilder b(n);
  b.set_source(0).set_sink(sink);

  auto state_at = [&](std::int32_t layer, std::int32_t j) -> StateId {
    return 1 + layer * W + j;
  };
  auto draw_reward = [&]() {
    if (spec.reward_law == RandomDagSpec::RewardLaw::uniform)
      return rng.uniform(spec.reward_lo, spec.reward_hi);
    return std::exp(rng.uniform(std::log(spec.reward_lo), std::log(spec.reward_hi)));
  };

  // source -> layer 0
  for (std::int32_t j = 0; j < W; ++j) b.add_edge(0, state_at(0, j));

  for (std::int32_t l = 0; l + 1 < L; ++l) {
    std::vector<char> child_has_parent(W, 0);
    for (std::int32_t j = 0; j < W; ++j) {
      bool any = false;
      for (std::int32_t j2 = 0; j2 < W; ++j2) {
        if (rng.next_double() < spec.edge_density) {
          b.add_edge(state_at(l, j), state_at(l + 1, j2));
          child_has_parent[j2] = 1;
          any = true;
        }
      }
      if (!any) {
        const std::int32_t j2 = static_cast<std::int32_t>(rng.next_below(W));
        b.add_edge(state_at(l, j), state_at(l + 1, j2));
        child_has_parent[j2] = 1;
      }
    }
    for (std::int32_t j2 = 0; j2 < W; ++j2) {
      if (!child_has_parent[j2]) {
        const std::int32_t j = static_cast<std::int32_t>(rng.next_below(W));
        b.add_edge(state_at(l, j), state_at(l + 1, j2));
      }
    }
  }

  for (std::int32_t j = 0; j < W; ++j) {
    b.add_edge(state_at(L - 1, j), sink);
    b.set_reward(state_at(L - 1, j), draw_reward());
  }
  if (all_terminating) {
    for (std::int32_t l = 0; l + 1 < L; ++l)
      for (std::int32_t j = 0; j < W; ++j) {
        b.add_edge(state_at(l, j), sink);
        b.set_reward(state_at(l, j), draw_reward());
      }
    b.add_edge(0, sink);
    b.set_reward(0, draw_reward());
  }
  FlowDag dag = b.build();
  if (all_terminating) {
    // re-register intermediate rewards equal to the terminal rewards
    FlowDagBuilder b2(dag.num_states());
    b2.set_source(dag.source()).set_sink(dag.sink());
    for (StateId s = 0; s < dag.num_states(); ++s)
      for (StateId c : dag.children(s)) b2.add_edge(s, c);
    for (StateId s : dag.terminating_states()) {
      b2.set_reward(s, dag.reward(s));
      b2.set_log_intermediate_reward(s, dag.log_reward(s));
    }
    return b2.build();
  }
  return dag;
}

}  // namespace

FlowDag random_graded_dag(const RandomDagSpec& spec) { return random_layered(spec, false); }

FlowDag random_all_terminating_dag(const RandomDagSpec& spec) {
  return random_layered(spec, true);
}

Encoder one_hot_encoder(std::int32_t) {
  return [](StateId s, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[s] = 1.0;
  };
}

}  // namespace gfn
