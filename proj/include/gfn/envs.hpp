#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/model.hpp"
#include "gfn/rng.hpp"

namespace gfn {

// ---------------------------------------------------------------------------
// hyper-grid

struct HypergridSpec {
  std::int32_t D = 2;
  std::int32_t H = 8;
  double R0 = 1e-4;
  double R1 = -9.9e-5;
  double R2 = 1.0 - 1e-6;
};

// R0 + R1 prod 1[|x/H - .5| > .25] + R2 prod 1[.3 < |x/H - .5| < .4],
// strict inequalities on both sides.
double hypergrid_reward(std::span<const std::int32_t> x, const HypergridSpec& spec);

// forward actions: increment coordinate d (action d) while x_d < H-1, plus
// the stop action (action D) into the cell's terminal copy
struct HypergridAction {
  std::int32_t action;  // 0..D-1 increments, D stop
  bool is_stop;
};
std::vector<HypergridAction> hypergrid_children(std::span<const std::int32_t> x,
                                                const HypergridSpec& spec);

std::int64_t hypergrid_state_index(std::span<const std::int32_t> x, const HypergridSpec& spec);
std::vector<std::int32_t> hypergrid_coords(std::int64_t index, const HypergridSpec& spec);

FlowDag make_hypergrid_dag(const HypergridSpec& spec);

// concatenated one-hot per coordinate, D*H wide
Encoder hypergrid_encoder(const HypergridSpec& spec);

// ---------------------------------------------------------------------------
// bit-sequence

struct BitSeqSpec {
  std::int32_t n = 12;  // total bits
  std::int32_t k = 4;   // word length, k | n
  std::vector<std::uint64_t> targets;
  std::int32_t delta = 2;
  double beta = 2.0;
};

// states are n/k slots, each empty or a k-bit word; slot i occupies digit i
// of a base-(2^k + 1) index with 0 = empty, w+1 = word w
std::int32_t bitseq_slots(const BitSeqSpec& spec);
std::int64_t bitseq_num_states(const BitSeqSpec& spec);
bool bitseq_is_full(std::int64_t index, const BitSeqSpec& spec);
std::uint64_t bitseq_bits(std::int64_t index, const BitSeqSpec& spec);  // full states only

std::vector<StateId> bitseq_children(std::int64_t index, const BitSeqSpec& spec);
std::vector<StateId> bitseq_parents(std::int64_t index, const BitSeqSpec& spec);

std::int32_t hamming(std::uint64_t a, std::uint64_t b);

// exp(-beta * min_{m in M} d(x, m)); IncompleteSequence on states with
// empty words
double bitseq_reward(std::int64_t index, const BitSeqSpec& spec);

// distance with every empty word counted as k mismatched bits; defined on
// all states (the forward-looking reward hook)
double bitseq_log_intermediate_reward(std::int64_t index, const BitSeqSpec& spec);

// seeded draws without replacement from {0,1}^n
std::vector<std::uint64_t> bitseq_random_targets(std::int32_t n, std::int32_t count, Rng rng);

FlowDag make_bitseq_dag(const BitSeqSpec& spec);

// one-hot per slot over 2^k + 1 symbols
Encoder bitseq_encoder(const BitSeqSpec& spec);

// ---------------------------------------------------------------------------
// random graded dags (oracle substrate)

struct RandomDagSpec {
  std::int32_t layers = 3;
  std::int32_t width = 3;
  double edge_density = 0.5;
  enum class RewardLaw { uniform, log_uniform } reward_law = RewardLaw::log_uniform;
  double reward_lo = 0.1;
  double reward_hi = 10.0;
  std::uint64_t seed = 0;
};

// Graded by construction: source, `layers` layers of `width` states, sink;
// every state keeps at least one child and one parent; final-layer states
// terminate with rewards drawn from the law.
FlowDag random_graded_dag(const RandomDagSpec& spec);

// Same skeleton but every state gets a terminal edge, a strictly positive
// reward and an intermediate reward, so every objective variant applies.
FlowDag random_all_terminating_dag(const RandomDagSpec& spec);

// one-hot over states
Encoder one_hot_encoder(std::int32_t num_states);

// ---------------------------------------------------------------------------
// bundled environment for the runner

struct Environment {
  std::string type;
  FlowDag dag;
  std::int32_t input_dim = 0;
  Encoder encode;
  // bit-sequence extras (empty otherwise)
  BitSeqSpec bitseq;
  bool has_modes = false;
  // bits of a terminating state, valid when has_modes
  std::function<std::uint64_t(StateId)> terminal_bits;
};

}  // namespace gfn
