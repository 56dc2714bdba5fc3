#include <doctest.h>

#include <cmath>
#include <set>

#include "gfn/envs.hpp"
#include "test_helpers.hpp"

using namespace gfn;
using namespace gfn::testing;

namespace {
const HypergridSpec kPaperGrid{4, 20, 1e-4, -9.9e-5, 1.0 - 1e-6};
}

TEST_CASE("hypergrid reward formula at the published constants") {
  CHECK(hypergrid_reward(std::vector<std::int32_t>{10, 10, 10, 10}, kPaperGrid) ==
        doctest::Approx(1e-4));
  CHECK(hypergrid_reward(std::vector<std::int32_t>{0, 0, 0, 0}, kPaperGrid) ==
        doctest::Approx(1e-6).epsilon(1e-9));
  CHECK(hypergrid_reward(std::vector<std::int32_t>{3, 17, 3, 17}, kPaperGrid) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(hypergrid_reward(std::vector<std::int32_t>{20, 0, 0, 0}, kPaperGrid), Error);
}

TEST_CASE("hypergrid mode cells sit exactly at coordinates 3 and 17") {
  std::int64_t modes = 0;
  std::vector<std::int32_t> x(4);
  for (std::int64_t idx = 0; idx < 160'000; ++idx) {
    std::int64_t rest = idx;
    bool expected = true;
    for (int d = 0; d < 4; ++d) {
      x[d] = static_cast<std::int32_t>(rest % 20);
      rest /= 20;
      if (x[d] != 3 && x[d] != 17) expected = false;
    }
    const bool high = hypergrid_reward(x, kPaperGrid) >= 0.5;
    CHECK(high == expected);
    if (high) ++modes;
  }
  CHECK(modes == 16);
}

TEST_CASE("hypergrid actions and terminal copies") {
  const HypergridSpec spec{4, 20, 1e-4, -9.9e-5, 1.0 - 1e-6};
  // the far corner only terminates
  std::vector<std::int32_t> corner(4, 19);
  const auto corner_actions = hypergrid_children(corner, spec);
  REQUIRE(corner_actions.size() == 1);
  CHECK(corner_actions[0].is_stop);
  // the origin has all increments plus the stop
  std::vector<std::int32_t> origin(4, 0);
  CHECK(hypergrid_children(origin, spec).size() == 5);

  const HypergridSpec small{2, 4, 1e-4, -9.9e-5, 1.0 - 1e-6};
  const FlowDag dag = make_hypergrid_dag(small);
  CHECK(dag.num_states() == 17);  // 16 cells + sink
  CHECK(static_cast<std::int64_t>(dag.terminating_states().size()) == 16);
  CHECK(dag.all_states_terminating_positive());
}

TEST_CASE("hypergrid lazy queries agree with the materialized dag") {
  const HypergridSpec spec{2, 5, 1e-4, -9.9e-5, 1.0 - 1e-6};
  const FlowDag dag = make_hypergrid_dag(spec);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    const auto coords = hypergrid_coords(s, spec);
    const auto actions = hypergrid_children(coords, spec);
    const auto children = dag.children(s);
    REQUIRE(children.size() == actions.size());
    CHECK(dag.reward(s) == hypergrid_reward(coords, spec));
    for (const auto& action : actions) {
      if (action.is_stop) {
        CHECK(dag.child_slot(s, dag.sink()) >= 0);
      } else {
        auto next = coords;
        next[action.action]++;
        CHECK(dag.child_slot(s, static_cast<StateId>(hypergrid_state_index(next, spec))) >= 0);
      }
    }
  }
}

TEST_CASE("bit-sequence rewards") {
  BitSeqSpec spec;
  spec.n = 12;
  spec.k = 4;
  spec.beta = 1.0;
  spec.targets = {0xABCu};
  // the target itself
  std::int64_t target_state = 0;
  {
    // state index with words of 0xABC: slot i holds bits [4i, 4i+4)
    const std::int64_t base = 17;
    std::int64_t digit = 1;
    for (int i = 0; i < 3; ++i) {
      const std::uint64_t word = (0xABCull >> (4 * i)) & 0xF;
      target_state += static_cast<std::int64_t>(word + 1) * digit;
      digit *= base;
    }
  }
  CHECK(bitseq_reward(target_state, spec) == doctest::Approx(1.0));

  // one flipped bit at beta 1 and beta 2
  const std::int64_t flipped = target_state + 1 * 1;  // slot 0 word 0xC -> 0xD
  CHECK(bitseq_bits(flipped, spec) == (0xABCull ^ 0x1ull));
  CHECK(bitseq_reward(flipped, spec) == doctest::Approx(std::exp(-1.0)));
  spec.beta = 2.0;
  CHECK(bitseq_reward(flipped, spec) == doctest::Approx(std::exp(-2.0)));

  // incomplete states have no reward
  CHECK_THROWS_AS(bitseq_reward(0, spec), Error);
}

TEST_CASE("bit-sequence transitions") {
  BitSeqSpec spec;
  spec.n = 16;
  spec.k = 4;
  spec.targets = {0u};
  // all-empty start: 4 slots x 16 words
  CHECK(bitseq_children(0, spec).size() == 64);
  // full state: only the sink
  const std::int64_t full = [&] {
    std::int64_t idx = 0, digit = 1;
    for (int i = 0; i < 4; ++i) {
      idx += 3 * digit;
      digit *= 17;
    }
    return idx;
  }();
  CHECK(bitseq_is_full(full, spec));
  CHECK(bitseq_children(full, spec).size() == 1);
  // three filled slots leave three parents
  const std::int64_t partial = full - 3;  // empty slot 0
  CHECK_FALSE(bitseq_is_full(partial, spec));
  CHECK(bitseq_parents(partial, spec).size() == 3);
}

TEST_CASE("bit-sequence dag materialization agrees with the pure queries") {
  BitSeqSpec spec;
  spec.n = 8;
  spec.k = 4;
  spec.beta = 2.0;
  spec.targets = bitseq_random_targets(spec.n, 3, Rng(5));
  const FlowDag dag = make_bitseq_dag(spec);
  CHECK(dag.num_states() == 17 * 17 + 1);
  CHECK(static_cast<std::int64_t>(dag.terminating_states().size()) == 256);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    const auto children = bitseq_children(s, spec);
    REQUIRE(dag.children(s).size() == children.size());
    for (StateId c : children) CHECK(dag.child_slot(s, c) >= 0);
    if (bitseq_is_full(s, spec)) CHECK(dag.reward(s) == doctest::Approx(bitseq_reward(s, spec)));
  }
}

TEST_CASE("bit-sequence intermediate reward counts empties as mismatches") {
  BitSeqSpec spec;
  spec.n = 8;
  spec.k = 4;
  spec.beta = 1.0;
  spec.targets = {0x00u};
  // all-empty: distance 8
  CHECK(bitseq_log_intermediate_reward(0, spec) == doctest::Approx(-8.0));
  // one slot filled with the matching word: distance 4
  CHECK(bitseq_log_intermediate_reward(1, spec) == doctest::Approx(-4.0));
  // full matching state: distance 0 = the terminal reward
  std::int64_t full = 1 + 17;
  CHECK(bitseq_log_intermediate_reward(full, spec) == doctest::Approx(0.0));
}

TEST_CASE("random target draws are unique and reproducible") {
  const auto a = bitseq_random_targets(12, 60, Rng(9));
  const auto b = bitseq_random_targets(12, 60, Rng(9));
  CHECK(a == b);
  std::set<std::uint64_t> uniq(a.begin(), a.end());
  CHECK(uniq.size() == 60);
  for (std::uint64_t m : a) CHECK(m < (1u << 12));
}

TEST_CASE("random graded dags") {
  {
    RandomDagSpec spec;
    spec.layers = 1;
    spec.width = 1;
    spec.seed = 3;
    const FlowDag dag = random_graded_dag(spec);
    CHECK(dag.num_states() == 3);
    CHECK(enumerate_complete_trajectories(dag).size() == 1);
  }
  {
    RandomDagSpec spec;
    spec.layers = 3;
    spec.width = 3;
    spec.edge_density = 1.0;
    spec.seed = 8;
    const FlowDag dag = random_graded_dag(spec);
    CHECK(is_graded(dag));
    // complete layered graph: width^(layers-1) * width paths
    CHECK(static_cast<std::int64_t>(enumerate_complete_trajectories(dag).size()) == 3 * 3 * 3);
  }
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RandomDagSpec spec;
    spec.layers = 2 + seed % 4;
    spec.width = 2 + seed % 3;
    spec.edge_density = 0.3 + 0.1 * (seed % 5);
    spec.seed = seed;
    const FlowDag dag = random_graded_dag(spec);  // build() validates
    CHECK(is_graded(dag));
    const FlowDag full = random_all_terminating_dag(spec);
    CHECK(full.all_states_terminating_positive());
    CHECK(full.has_intermediate_rewards());
  }
}
