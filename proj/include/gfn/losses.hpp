#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "gfn/error.hpp"

namespace gfn {

// Convex regression loss g with its unique minimum g(0)=0, g'(0)=0.
struct RegressionLoss {
  std::string name;
  std::function<double(double)> g;
  std::function<double(double)> g_prime;
  std::function<double(double)> g_double_prime;  // diagnostics; may be empty
  // set when the numeric convexity check failed; such losses induce a pseudo
  // f-divergence and are accepted with this flag raised
  bool convexity_warning = false;
  // ground-truth zero-forcing/zero-avoiding flags for the shipped losses;
  // custom losses fall back to numeric probing
  std::optional<std::pair<bool, bool>> known_classification;
};

struct LimitValue {
  bool infinite = false;
  double value = 0.0;  // meaningful only when finite
};

struct FDivergenceSpec {
  std::string name;
  std::function<double(double)> f;        // defined on t > 0
  std::function<double(double)> f_prime;  // defined on t > 0
  LimitValue f_at_zero;                   // lim_{t->0+} f(t)
  LimitValue f_prime_at_infinity;         // lim_{t->inf} f(t)/t
};

struct LossClassification {
  bool zero_forcing = false;
  bool zero_avoiding = false;
};

bool is_builtin_loss(const std::string& name);

// quadratic | linex1 | linex_half | shifted_cosh; throws unknown_loss.
RegressionLoss make_builtin_loss(const std::string& name);

// The closed-form dual f of a built-in loss (the Table-2 row).
FDivergenceSpec builtin_f_divergence(const std::string& loss_name);

// Adaptive Simpson with interval bisection; throws quadrature_failed when the
// error estimate still exceeds the tolerance at max depth.
double adaptive_simpson(const std::function<double(double)>& fn, double a, double b,
                        double abs_tol, int max_depth = 60);

// f(t) = t * int_1^t g'(log s)/s^2 ds, evaluated by quadrature after the
// substitution s = e^u. Matches the Table-2 closed forms for built-ins.
double f_from_g(const RegressionLoss& loss, double t);

// g(t) = f(e^t) - int_1^{e^t} f(s)/s ds  (same substitution).
double g_from_f(const std::function<double(double)>& f, double t);
inline double g_from_f(const FDivergenceSpec& spec, double t) { return g_from_f(spec.f, t); }

struct ClassificationProbes {
  double f_near_zero;        // f_from_g at t = 1e-8
  double slope_at_infinity;  // f_from_g(t)/t at t = 1e8
};
ClassificationProbes classification_probes(const RegressionLoss& loss);

// Built-ins report their known flags; custom losses use the numeric probes
// (magnitude > 1e5 => infinite, [1e2, 1e5] => inconclusive). The probes are
// blind to logarithmic-rate divergence, which is why built-ins carry ground
// truth.
LossClassification classify_loss(const RegressionLoss& loss);

// The four duals of the gradient correspondence; `which` is 1..4:
//   1: t int_1^t g'(log s)/s^2 ds    2: g(log t)
//   3: t g(log t)                    4: int_1^t g'(log s) ds
// Built-in losses get closed forms for case 1; the rest are exact in g.
FDivergenceSpec dual_divergence(const RegressionLoss& loss, int which);

// D_f(p||q) over aligned masses, with the q=0 correction term
// f'(inf) * sum of p where q vanishes. Accepts unnormalized masses; returns
// +infinity when a term is infinite.
double f_divergence(std::span<const double> p, std::span<const double> q,
                    const FDivergenceSpec& f);

// Keyed variant; throws key_mismatch when the key sets differ.
double f_divergence(const std::map<std::string, double>& p,
                    const std::map<std::string, double>& q, const FDivergenceSpec& f);

// Small arithmetic grammar over {t, exp, log, sqrt, pow, + - * / ^, numbers}.
std::function<double(double)> parse_expression(const std::string& expr);

// Same grammar with the exact derivative (dual-number evaluation). Enforces
// g(0)=0, g'(0)=0; a failed convexity scan only raises convexity_warning.
RegressionLoss parse_loss_expression(const std::string& name, const std::string& expr);

// Built-in by name, otherwise parsed as an expression.
RegressionLoss resolve_loss(const std::string& name_or_expr);

}  // namespace gfn
