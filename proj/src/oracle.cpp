#include "gfn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace gfn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

CutFamily layered_cut_families(const FlowDag& graded, ObjectiveVariant family, double lambda) {
  if (!is_graded(graded)) fail(errc::not_graded, "cut families need a graded dag");
  const auto layer = layer_index(graded);
  const std::int32_t L = layer[graded.sink()];

  std::vector<std::vector<StateId>> by_layer(L + 1);
  for (StateId s = 0; s < graded.num_states(); ++s) by_layer[layer[s]].push_back(s);

  CutFamily out;
  switch (family) {
    case ObjectiveVariant::FM: {
      for (std::int32_t i = 1; i <= L - 1; ++i) {
        Cut cut{Cut::Kind::state_layer, 1.0, {}};
        for (StateId s : by_layer[i]) cut.members.push_back({s});
        out.cuts.push_back(std::move(cut));
      }
      break;
    }
    case ObjectiveVariant::DB: {
      for (std::int32_t i = 0; i <= L - 1; ++i) {
        Cut cut{Cut::Kind::edge_layer, 1.0, {}};
        for (StateId s : by_layer[i])
          for (StateId c : graded.children(s)) cut.members.push_back({s, c});
        out.cuts.push_back(std::move(cut));
      }
      break;
    }
    case ObjectiveVariant::TB: {
      Cut cut{Cut::Kind::complete_trajectory, 1.0, {}};
      cut.members = enumerate_complete_trajectories(graded);
      out.cuts.push_back(std::move(cut));
      break;
    }
    case ObjectiveVariant::STB: {
      const auto trajs = enumerate_complete_trajectories(graded);
      double norm = 0.0;
      for (std::int32_t i = 0; i < L; ++i)
        for (std::int32_t j = i + 1; j <= L; ++j)
          norm += std::pow(lambda, static_cast<double>(j - i));
      for (std::int32_t i = 0; i < L; ++i) {
        for (std::int32_t j = i + 1; j <= L; ++j) {
          Cut cut{Cut::Kind::partial_layer,
                  std::pow(lambda, static_cast<double>(j - i)) / norm,
                  {}};
          std::set<Trajectory> distinct;
          for (const auto& tau : trajs)
            distinct.insert(Trajectory(tau.begin() + i, tau.begin() + j + 1));
          cut.members.assign(distinct.begin(), distinct.end());
          out.cuts.push_back(std::move(cut));
        }
      }
      break;
    }
    default:
      fail(errc::not_graded, "cut families exist for FM, DB, TB and STB");
  }
  return out;
}

// ---------------------------------------------------------------------------
// FlowEnumeration

FlowEnumeration::FlowEnumeration(const FlowDag& graded, EvalContext& ctx, std::int64_t cap)
    : dag_(graded) {
  if (!is_graded(graded)) fail(errc::not_graded, "flow enumeration needs a graded dag");
  if (count_complete_trajectories(graded) > cap)
    fail(errc::infeasible_enumeration, "too many complete trajectories to enumerate");
  trajs_ = enumerate_complete_trajectories(graded, cap);
  layer_ = layer_index(graded);
  layers_ = layer_[graded.sink()];

  const std::size_t n = trajs_.size();
  log_f_.resize(n);
  log_b_.resize(n);
  f_.resize(n);
  b_.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Trajectory& tau = trajs_[t];
    double lf = ctx.log_total_flow();
    for (std::size_t i = 0; i + 1 < tau.size(); ++i)
      lf += ctx.log_forward(tau[i])[dag_.child_slot(tau[i], tau[i + 1])];
    double lb = dag_.log_reward(tau[tau.size() - 2]);
    for (std::size_t i = 1; i + 1 < tau.size(); ++i)
      lb += ctx.log_backward(tau[i])[dag_.parent_slot(tau[i], tau[i - 1])];
    log_f_[t] = lf;
    log_b_[t] = lb;
    f_[t] = std::exp(lf);
    b_[t] = std::exp(lb);
  }
}

const std::vector<std::int32_t>& FlowEnumeration::containing(const Trajectory& member) const {
  scratch_members_.clear();
  const std::int32_t start = layer_[member.front()];
  for (std::size_t t = 0; t < trajs_.size(); ++t) {
    const Trajectory& tau = trajs_[t];
    bool match = true;
    for (std::size_t i = 0; i < member.size(); ++i) {
      if (tau[start + i] != member[i]) {
        match = false;
        break;
      }
    }
    if (match) scratch_members_.push_back(static_cast<std::int32_t>(t));
  }
  return scratch_members_;
}

double FlowEnumeration::forward_mass(const Trajectory& member) const {
  double acc = 0.0;
  for (std::int32_t t : containing(member)) acc += f_[t];
  return acc;
}

double FlowEnumeration::backward_mass(const Trajectory& member) const {
  double acc = 0.0;
  for (std::int32_t t : containing(member)) acc += b_[t];
  return acc;
}

void FlowEnumeration::apply_gradients(EvalContext& ctx, std::span<const double> coef_forward,
                                      std::span<const double> coef_backward) const {
  for (std::size_t t = 0; t < trajs_.size(); ++t) {
    const Trajectory& tau = trajs_[t];
    const double cf = coef_forward[t];
    if (cf != 0.0) {
      ctx.add_d_log_total_flow(cf);
      for (std::size_t i = 0; i + 1 < tau.size(); ++i)
        ctx.add_d_log_forward(tau[i], dag_.child_slot(tau[i], tau[i + 1]), cf);
    }
    const double cb = coef_backward[t];
    if (cb != 0.0) {
      for (std::size_t i = 1; i + 1 < tau.size(); ++i)
        ctx.add_d_log_backward(tau[i], dag_.parent_slot(tau[i], tau[i - 1]), cb);
    }
  }
}

// ---------------------------------------------------------------------------

double divergence_objective(const FlowDag& graded, EvalContext& ctx, const CutFamily& family,
                            const FDivergenceSpec& f, std::int64_t cap) {
  FlowEnumeration flows(graded, ctx, cap);
  double total = 0.0;
  for (const Cut& cut : family.cuts) {
    if (cut.weight == 0.0) continue;
    std::vector<double> p, q;
    p.reserve(cut.members.size());
    q.reserve(cut.members.size());
    for (const auto& member : cut.members) {
      p.push_back(flows.backward_mass(member));
      q.push_back(flows.forward_mass(member));
    }
    const double d = f_divergence(p, q, f);
    if (!std::isfinite(d)) return d;
    total += cut.weight * d;
  }
  return total;
}

std::array<CorrespondenceCase, 4> correspondence_cases() {
  return {{{MuWeighting::forward, DiffSide::forward_params, 1},
           {MuWeighting::forward, DiffSide::backward_params, 2},
           {MuWeighting::backward, DiffSide::forward_params, 3},
           {MuWeighting::backward, DiffSide::backward_params, 4}}};
}

HeadLayout oracle_layout(const FlowDag& dag) {
  HeadLayout layout;
  layout.fwd = dag.num_forward_actions();
  layout.bwd = dag.num_backward_actions();
  layout.total_flow = true;
  return layout;
}

namespace {

std::vector<double> subset_grads(const TabularModel& model, DiffSide side) {
  std::vector<double> out;
  auto grads = model.grads();
  for (std::int32_t i = 0; i < model.num_params(); ++i) {
    const bool fwd = model.is_forward_param(i);
    const bool bwd = model.is_backward_param(i);
    if (side == DiffSide::forward_params ? fwd : bwd) out.push_back(grads[i]);
  }
  return out;
}

}  // namespace

CorrespondenceReport verify_grad_correspondence(const FlowDag& graded, TabularModel& model,
                                                const RegressionLoss& g,
                                                const CorrespondenceCase& kase,
                                                ObjectiveVariant family, double lambda,
                                                double tol) {
  EvalContext ctx(model, graded);
  const FlowEnumeration flows(graded, ctx, 50'000);
  const CutFamily cuts = layered_cut_families(graded, family, lambda);
  const std::size_t nt = flows.trajectories().size();

  struct MemberData {
    double weight;
    double fmass, bmass;
    std::vector<std::int32_t> owners;
  };
  std::vector<MemberData> members;
  for (const Cut& cut : cuts.cuts) {
    for (const auto& member : cut.members) {
      MemberData md;
      md.weight = cut.weight;
      md.owners = flows.containing(member);
      md.fmass = 0.0;
      md.bmass = 0.0;
      for (std::int32_t t : md.owners) {
        md.fmass += flows.forward_of(t);
        md.bmass += flows.backward_of(t);
      }
      members.push_back(std::move(md));
    }
  }

  // LHS: unified objective with mu frozen to flow * cut weight
  std::vector<double> coef_f(nt, 0.0), coef_b(nt, 0.0);
  for (const MemberData& md : members) {
    const double t = std::log(md.bmass) - std::log(md.fmass);
    const double mu =
        md.weight * (kase.weighting == MuWeighting::forward ? md.fmass : md.bmass);
    const double up = mu * g.g_prime(t);
    for (std::int32_t ti : md.owners) {
      coef_b[ti] += up * flows.backward_of(ti) / md.bmass;
      coef_f[ti] -= up * flows.forward_of(ti) / md.fmass;
    }
  }
  model.zero_grads();
  flows.apply_gradients(ctx, coef_f, coef_b);
  ctx.backward();
  const std::vector<double> lhs = subset_grads(model, kase.differentiated);

  // RHS: d sum_C w(C) D_f(B^C||F^C) with the case's dual
  const FDivergenceSpec fspec = dual_divergence(g, kase.f_builder);
  std::fill(coef_f.begin(), coef_f.end(), 0.0);
  std::fill(coef_b.begin(), coef_b.end(), 0.0);
  for (const MemberData& md : members) {
    const double r = md.bmass / md.fmass;
    const double fr = fspec.f(r);
    const double fpr = fspec.f_prime(r);
    const double a = md.weight * (fr - r * fpr);
    const double bb = md.weight * fpr;
    for (std::int32_t ti : md.owners) {
      coef_f[ti] += a * flows.forward_of(ti);
      coef_b[ti] += bb * flows.backward_of(ti);
    }
  }
  model.zero_grads();
  flows.apply_gradients(ctx, coef_f, coef_b);
  ctx.backward();
  const std::vector<double> rhs = subset_grads(model, kase.differentiated);

  CorrespondenceReport report;
  double scale = 0.0;
  for (double v : lhs) scale = std::max(scale, std::abs(v));
  report.max_abs_grad_lhs = scale;
  const double floor = std::max(1e-12, 1e-9 * scale);
  report.per_parameter_errors.resize(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double denom = std::max({std::abs(lhs[i]), std::abs(rhs[i]), floor});
    report.per_parameter_errors[i] = std::abs(lhs[i] - rhs[i]) / denom;
    report.max_rel_error = std::max(report.max_rel_error, report.per_parameter_errors[i]);
  }
  report.pass = report.max_rel_error < tol;
  model.zero_grads();
  return report;
}

std::vector<double> reverse_kl_forward_gradient(const FlowDag& graded, TabularModel& model) {
  EvalContext ctx(model, graded);
  const FlowEnumeration flows(graded, ctx, 50'000);
  const std::size_t nt = flows.trajectories().size();
  // d/dtheta sum_tau [F log(F/B) + B - F] = sum_tau F log(F/B) dlogF
  std::vector<double> coef_f(nt, 0.0), coef_b(nt, 0.0);
  for (std::size_t t = 0; t < nt; ++t)
    coef_f[t] = flows.forward_of(t) * (flows.log_forward_of(t) - flows.log_backward_of(t));
  model.zero_grads();
  flows.apply_gradients(ctx, coef_f, coef_b);
  ctx.backward();
  auto out = subset_grads(model, DiffSide::forward_params);
  model.zero_grads();
  return out;
}

// ---------------------------------------------------------------------------
// zero-forcing / zero-avoiding behavior on the constrained tree

namespace {

struct TreeObjective {
  const FDivergenceSpec& fspec;
  const RegressionLoss& g;
  static constexpr double kLogRewardFloor = -30.0;

  // flows at root split a: F = (a, a, 2(1-a)), B = (1, e^-30, 1)
  void flows(double a, std::array<double, 3>& F, std::array<double, 3>& B) const {
    F = {a, a, 2.0 * (1.0 - a)};
    B = {1.0, std::exp(kLogRewardFloor), 1.0};
  }

  double value(double a) const {
    std::array<double, 3> F, B;
    flows(a, F, B);
    return f_divergence(std::vector<double>(B.begin(), B.end()),
                        std::vector<double>(F.begin(), F.end()), fspec);
  }

  // d/dtheta of the objective through a = sigmoid(theta); equals the frozen-mu
  // trajectory-cut gradient of the unified loss
  double grad_theta(double theta) const {
    const double a = 1.0 / (1.0 + std::exp(-theta));
    std::array<double, 3> F, B;
    flows(a, F, B);
    const std::array<double, 3> dlog_f = {1.0 - a, 1.0 - a, -a};
    double grad = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double t = std::log(B[i]) - std::log(F[i]);
      grad += -F[i] * g.g_prime(t) * dlog_f[i];
    }
    return grad;
  }
};

}  // namespace

ZeroBehaviorResult zero_behavior_test(const RegressionLoss& g, std::int64_t max_iters) {
  const FDivergenceSpec fspec = dual_divergence(g, 1);
  TreeObjective obj{fspec, g};

  double theta = 0.0;
  double step = 1.0;
  double value = obj.value(1.0 / (1.0 + std::exp(-theta)));
  std::int64_t iter = 0;
  for (; iter < max_iters; ++iter) {
    const double grad = obj.grad_theta(theta);
    if (std::abs(grad) < 1e-9) break;
    // armijo backtracking with step growth; the first gradients of the
    // exponential losses are enormous, so allow deep backtracking
    bool moved = false;
    for (int tries = 0; tries < 300; ++tries) {
      const double cand = theta - step * grad;
      const double cand_value = obj.value(1.0 / (1.0 + std::exp(-cand)));
      if (cand_value <= value - 1e-4 * step * grad * grad) {
        theta = cand;
        value = cand_value;
        step *= 2.0;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      if (std::abs(grad) > 1e-6)
        fail(errc::non_convergence, "zero-behavior line search stalled");
      break;  // progress below double resolution near the optimum
    }
  }
  if (iter >= max_iters)
    fail(errc::non_convergence, "zero-behavior descent did not converge in budget");

  ZeroBehaviorResult result;
  result.p_branch = 1.0 / (1.0 + std::exp(-theta));
  result.iterations = iter;

  double best_a = 0.0, best_value = std::numeric_limits<double>::infinity();
  for (std::int32_t i = 0; i <= 10'000; ++i) {
    const double a = 1e-4 * i;
    const double v = obj.value(a);
    if (v < best_value) {
      best_value = v;
      best_a = a;
    }
  }
  result.grid_argmin = best_a;
  return result;
}

}  // namespace gfn
