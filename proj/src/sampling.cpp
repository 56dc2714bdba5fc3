#include "gfn/sampling.hpp"

#include <cmath>
#include <vector>

#include "gfn/error.hpp"

namespace gfn {

SamplingStrategy::Mode sampling_mode_from_name(const std::string& name) {
  if (name == "on_policy") return SamplingStrategy::Mode::on_policy;
  if (name == "epsilon_noisy") return SamplingStrategy::Mode::epsilon_noisy;
  if (name == "tempered") return SamplingStrategy::Mode::tempered;
  if (name == "backward") return SamplingStrategy::Mode::backward;
  fail(errc::bad_config, "unknown sampler mode '" + name + "'");
}

namespace {

std::size_t draw_categorical(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = rng.next_double() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

}  // namespace

Trajectory sample_forward_trajectory(const FlowDag& dag, EvalContext& ctx,
                                     const SamplingStrategy& strategy, Rng& rng) {
  Trajectory traj{dag.source()};
  std::vector<double> probs;
  StateId s = dag.source();
  while (s != dag.sink()) {
    const std::size_t n = dag.children(s).size();
    switch (strategy.mode) {
      case SamplingStrategy::Mode::on_policy:
      case SamplingStrategy::Mode::backward: {
        auto pf = ctx.forward_probs(s);
        probs.assign(pf.begin(), pf.end());
        break;
      }
      case SamplingStrategy::Mode::epsilon_noisy: {
        auto pf = ctx.forward_probs(s);
        const double eps = strategy.epsilon;
        probs.resize(n);
        for (std::size_t k = 0; k < n; ++k)
          probs[k] = (1.0 - eps) * pf[k] + eps / static_cast<double>(n);
        break;
      }
      case SamplingStrategy::Mode::tempered: {
        auto lf = ctx.log_forward(s);
        probs.resize(n);
        double m = lf[0] / strategy.temperature;
        for (std::size_t k = 1; k < n; ++k) m = std::max(m, lf[k] / strategy.temperature);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          probs[k] = std::exp(lf[k] / strategy.temperature - m);
          sum += probs[k];
        }
        for (std::size_t k = 0; k < n; ++k) probs[k] /= sum;
        break;
      }
    }
    const std::size_t pick = draw_categorical(probs, rng);
    s = dag.children(s)[pick];
    traj.push_back(s);
  }
  return traj;
}

Trajectory sample_backward_trajectory(const FlowDag& dag, EvalContext& ctx, bool learned,
                                      StateId terminal, Rng& rng) {
  Trajectory reversed{terminal};
  std::vector<double> probs;
  StateId s = terminal;
  while (s != dag.source()) {
    const auto parents = dag.parents(s);
    if (learned) {
      auto lb = ctx.log_backward(s);
      probs.resize(parents.size());
      for (std::size_t k = 0; k < parents.size(); ++k) probs[k] = std::exp(lb[k]);
    } else {
      probs.assign(parents.size(), 1.0 / static_cast<double>(parents.size()));
    }
    const std::size_t pick = draw_categorical(probs, rng);
    s = parents[pick];
    reversed.push_back(s);
  }
  Trajectory traj(reversed.rbegin(), reversed.rend());
  traj.push_back(dag.sink());
  return traj;
}

}  // namespace gfn
