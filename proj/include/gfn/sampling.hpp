#pragma once

#include "gfn/dag.hpp"
#include "gfn/model.hpp"
#include "gfn/rng.hpp"

namespace gfn {

struct SamplingStrategy {
  enum class Mode { on_policy, epsilon_noisy, tempered, backward };
  Mode mode = Mode::on_policy;
  double epsilon = 0.0;      // epsilon_noisy
  double temperature = 1.0;  // tempered
};

SamplingStrategy::Mode sampling_mode_from_name(const std::string& name);

// Complete trajectory from source to sink. epsilon_noisy mixes the per-step
// action distribution with uniform-over-valid ((1-eps) p + eps u) before a
// single categorical draw, so eps = 0 consumes the rng exactly like
// on_policy. Tempered divides logits by T.
Trajectory sample_forward_trajectory(const FlowDag& dag, EvalContext& ctx,
                                     const SamplingStrategy& strategy, Rng& rng);

// Ancestor sampling from a terminating state under the backward policy
// (learned when the model has the head and `learned` is set, else uniform);
// returns the full source -> ... -> terminal -> sink trajectory.
Trajectory sample_backward_trajectory(const FlowDag& dag, EvalContext& ctx, bool learned,
                                      StateId terminal, Rng& rng);

}  // namespace gfn
