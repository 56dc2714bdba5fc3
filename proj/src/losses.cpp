#include "gfn/losses.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace gfn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SimpsonCtx {
  const std::function<double(double)>& fn;
  double abs_tol;
  int max_depth;
};

double simpson_rec(const SimpsonCtx& ctx, double a, double b, double fa, double fm, double fb,
                   double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = ctx.fn(lm), frm = ctx.fn(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double err = left + right - whole;
  // the relative branch stops refinement where the segment value is so large
  // that the absolute demand sits below double rounding noise
  if (std::abs(err) <= 15.0 * tol || std::abs(err) <= 1e-12 * std::abs(left + right))
    return left + right + err / 15.0;
  if (depth >= ctx.max_depth) {
    if (std::abs(err) > 1e4 * std::max(tol, 1e-300))
      fail(errc::quadrature_failed, "adaptive quadrature did not converge");
    return left + right + err / 15.0;
  }
  return simpson_rec(ctx, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         simpson_rec(ctx, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& fn, double a, double b,
                        double abs_tol, int max_depth) {
  if (a == b) return 0.0;
  SimpsonCtx ctx{fn, abs_tol, max_depth};
  const double m = 0.5 * (a + b);
  const double fa = fn(a), fm = fn(m), fb = fn(b);
  if (!std::isfinite(fa) || !std::isfinite(fm) || !std::isfinite(fb))
    fail(errc::quadrature_failed, "integrand not finite on the interval");
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(ctx, a, b, fa, fm, fb, whole, abs_tol, 0);
}

bool is_builtin_loss(const std::string& name) {
  return name == "quadratic" || name == "linex1" || name == "linex_half" ||
         name == "shifted_cosh";
}

RegressionLoss make_builtin_loss(const std::string& name) {
  RegressionLoss loss;
  loss.name = name;
  if (name == "quadratic") {
    loss.g = [](double t) { return 0.5 * t * t; };
    loss.g_prime = [](double t) { return t; };
    loss.g_double_prime = [](double) { return 1.0; };
    loss.known_classification = {{true, false}};
  } else if (name == "linex1") {
    loss.g = [](double t) { return std::exp(t) - t - 1.0; };
    loss.g_prime = [](double t) { return std::exp(t) - 1.0; };
    loss.g_double_prime = [](double t) { return std::exp(t); };
    loss.known_classification = {{false, true}};
  } else if (name == "linex_half") {
    loss.g = [](double t) { return 4.0 * std::exp(0.5 * t) - 2.0 * t - 4.0; };
    loss.g_prime = [](double t) { return 2.0 * std::exp(0.5 * t) - 2.0; };
    loss.g_double_prime = [](double t) { return std::exp(0.5 * t); };
    loss.known_classification = {{false, false}};
  } else if (name == "shifted_cosh") {
    loss.g = [](double t) { return std::exp(t) + std::exp(-t) - 2.0; };
    loss.g_prime = [](double t) { return std::exp(t) - std::exp(-t); };
    loss.g_double_prime = [](double t) { return std::exp(t) + std::exp(-t); };
    loss.known_classification = {{true, true}};
  } else {
    fail(errc::unknown_loss, "unknown loss '" + name + "'");
  }
  return loss;
}

FDivergenceSpec builtin_f_divergence(const std::string& loss_name) {
  FDivergenceSpec spec;
  spec.name = loss_name;
  if (loss_name == "quadratic") {
    spec.f = [](double t) { return t - std::log(t) - 1.0; };
    spec.f_prime = [](double t) { return 1.0 - 1.0 / t; };
    spec.f_at_zero = {true, 0.0};
    spec.f_prime_at_infinity = {false, 1.0};
  } else if (loss_name == "linex1") {
    spec.f = [](double t) { return t * std::log(t) - t + 1.0; };
    spec.f_prime = [](double t) { return std::log(t); };
    spec.f_at_zero = {false, 1.0};
    spec.f_prime_at_infinity = {true, 0.0};
  } else if (loss_name == "linex_half") {
    spec.f = [](double t) { return 2.0 * t - 4.0 * std::sqrt(t) + 2.0; };
    spec.f_prime = [](double t) { return 2.0 - 2.0 / std::sqrt(t); };
    spec.f_at_zero = {false, 2.0};
    spec.f_prime_at_infinity = {false, 2.0};
  } else if (loss_name == "shifted_cosh") {
    spec.f = [](double t) { return t * std::log(t) - 0.5 * t + 0.5 / t; };
    spec.f_prime = [](double t) { return std::log(t) + 0.5 - 0.5 / (t * t); };
    spec.f_at_zero = {true, 0.0};
    spec.f_prime_at_infinity = {true, 0.0};
  } else {
    fail(errc::unknown_loss, "no closed-form divergence for '" + loss_name + "'");
  }
  return spec;
}

namespace {

// int_1^t g'(log s)/s^2 ds = int_0^{log t} g'(u) e^{-u} du
double inner_integral_f1(const RegressionLoss& loss, double t, double abs_tol) {
  const double upper = std::log(t);
  return adaptive_simpson([&](double u) { return loss.g_prime(u) * std::exp(-u); }, 0.0, upper,
                          abs_tol);
}

}  // namespace

double f_from_g(const RegressionLoss& loss, double t) {
  if (!(t > 0.0)) fail(errc::quadrature_failed, "f_from_g requires t > 0");
  if (t == 1.0) return 0.0;
  // f = t * I, so an absolute target on f means a tolerance of f_tol / t on
  // the inner integral
  const double tol = std::max(1e-13, 1e-10 / t);
  return t * inner_integral_f1(loss, t, tol);
}

double g_from_f(const std::function<double(double)>& f, double t) {
  if (t == 0.0) return 0.0;
  // int_1^{e^t} f(s)/s ds = int_0^t f(e^u) du
  const double integral =
      adaptive_simpson([&](double u) { return f(std::exp(u)); }, 0.0, t, 1e-10);
  return f(std::exp(t)) - integral;
}

ClassificationProbes classification_probes(const RegressionLoss& loss) {
  ClassificationProbes probes;
  probes.f_near_zero = f_from_g(loss, 1e-8);
  probes.slope_at_infinity = f_from_g(loss, 1e8) / 1e8;
  return probes;
}

namespace {

bool probe_is_infinite(double magnitude) {
  const double a = std::abs(magnitude);
  if (a > 1e5) return true;
  if (a >= 1e2)
    fail(errc::inconclusive_classification,
         "probe magnitude " + std::to_string(a) + " in the ambiguous band [1e2, 1e5]");
  return false;
}

}  // namespace

LossClassification classify_loss(const RegressionLoss& loss) {
  if (loss.known_classification)
    return {loss.known_classification->first, loss.known_classification->second};
  const ClassificationProbes probes = classification_probes(loss);
  LossClassification out;
  out.zero_forcing = probe_is_infinite(probes.f_near_zero);
  out.zero_avoiding = probe_is_infinite(probes.slope_at_infinity);
  return out;
}

FDivergenceSpec dual_divergence(const RegressionLoss& loss, int which) {
  if (loss.name.empty() && !loss.g) fail(errc::unknown_loss, "empty loss");
  FDivergenceSpec spec;
  spec.name = loss.name + "_f" + std::to_string(which);
  const RegressionLoss g = loss;  // captured by value below
  switch (which) {
    case 1:
      if (is_builtin_loss(g.name)) return builtin_f_divergence(g.name);
      spec.f = [g](double t) { return f_from_g(g, t); };
      // t f1'(t) = f1(t) + g'(log t)
      spec.f_prime = [g](double t) { return (f_from_g(g, t) + g.g_prime(std::log(t))) / t; };
      break;
    case 2:
      spec.f = [g](double t) { return g.g(std::log(t)); };
      spec.f_prime = [g](double t) { return g.g_prime(std::log(t)) / t; };
      break;
    case 3:
      spec.f = [g](double t) { return t * g.g(std::log(t)); };
      spec.f_prime = [g](double t) { return g.g(std::log(t)) + g.g_prime(std::log(t)); };
      break;
    case 4:
      // int_1^t g'(log s) ds = int_0^{log t} g'(u) e^u du
      spec.f = [g](double t) {
        if (t == 1.0) return 0.0;
        return adaptive_simpson([&](double u) { return g.g_prime(u) * std::exp(u); }, 0.0,
                                std::log(t), 1e-11);
      };
      spec.f_prime = [g](double t) { return g.g_prime(std::log(t)); };
      break;
    default:
      fail(errc::unknown_loss, "dual_divergence index must be 1..4");
  }
  // numeric stand-ins, only consulted when a mass is exactly zero
  const double near0 = spec.f(1e-10);
  const double slope = spec.f(1e10) / 1e10;
  spec.f_at_zero = std::abs(near0) > 1e5 ? LimitValue{true, 0.0} : LimitValue{false, near0};
  spec.f_prime_at_infinity =
      std::abs(slope) > 1e5 ? LimitValue{true, 0.0} : LimitValue{false, slope};
  return spec;
}

double f_divergence(std::span<const double> p, std::span<const double> q,
                    const FDivergenceSpec& f) {
  if (p.size() != q.size()) fail(errc::key_mismatch, "mass vectors differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0 || !std::isfinite(p[i]) || !std::isfinite(q[i]))
      fail(errc::key_mismatch, "masses must be finite and nonnegative");
    if (q[i] > 0.0) {
      if (p[i] == 0.0) {
        if (f.f_at_zero.infinite) return kInf;
        acc += q[i] * f.f_at_zero.value;
      } else {
        acc += q[i] * f.f(p[i] / q[i]);
      }
    } else if (p[i] > 0.0) {
      if (f.f_prime_at_infinity.infinite) return kInf;
      acc += f.f_prime_at_infinity.value * p[i];
    }
  }
  return acc;
}

double f_divergence(const std::map<std::string, double>& p,
                    const std::map<std::string, double>& q, const FDivergenceSpec& f) {
  if (p.size() != q.size()) fail(errc::key_mismatch, "key sets differ");
  std::vector<double> pv, qv;
  pv.reserve(p.size());
  qv.reserve(q.size());
  auto qi = q.begin();
  for (const auto& [key, mass] : p) {
    if (qi->first != key) fail(errc::key_mismatch, "key sets differ at '" + key + "'");
    pv.push_back(mass);
    qv.push_back(qi->second);
    ++qi;
  }
  return f_divergence(pv, qv, f);
}

// ---------------------------------------------------------------------------
// expression grammar: expr := term (('+'|'-') term)*
//                     term := factor (('*'|'/') factor)*
//                     factor := '-' factor | primary ('^' factor)?
//                     primary := number | 't' | fn '(' expr (',' expr)? ')' | '(' expr ')'

namespace {

struct Dual {
  double v;
  double d;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

struct Expr {
  virtual ~Expr() = default;
  virtual Dual eval(Dual t) const = 0;
};
using ExprPtr = std::shared_ptr<const Expr>;

struct Num final : Expr {
  double value;
  explicit Num(double v) : value(v) {}
  Dual eval(Dual) const override { return {value, 0.0}; }
};
struct Var final : Expr {
  Dual eval(Dual t) const override { return t; }
};
struct Binary final : Expr {
  char op;
  ExprPtr lhs, rhs;
  Binary(char o, ExprPtr l, ExprPtr r) : op(o), lhs(std::move(l)), rhs(std::move(r)) {}
  Dual eval(Dual t) const override {
    const Dual a = lhs->eval(t), b = rhs->eval(t);
    switch (op) {
      case '+': return a + b;
      case '-': return a - b;
      case '*': return a * b;
      case '/': return a / b;
      default: {  // '^' and pow()
        const double v = std::pow(a.v, b.v);
        // d/dt a^b = a^b (b' log a + b a'/a); constant-exponent case stays
        // finite at a = 0 for b > 1
        double d;
        if (b.d == 0.0)
          d = b.v * std::pow(a.v, b.v - 1.0) * a.d;
        else
          d = v * (b.d * std::log(a.v) + b.v * a.d / a.v);
        return {v, d};
      }
    }
  }
};
struct Call final : Expr {
  std::string fn;
  ExprPtr arg;
  Call(std::string f, ExprPtr a) : fn(std::move(f)), arg(std::move(a)) {}
  Dual eval(Dual t) const override {
    const Dual a = arg->eval(t);
    if (fn == "exp") {
      const double e = std::exp(a.v);
      return {e, e * a.d};
    }
    if (fn == "log") return {std::log(a.v), a.d / a.v};
    // sqrt
    const double s = std::sqrt(a.v);
    return {s, 0.5 * a.d / s};
  }
};

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  ExprPtr parse() {
    ExprPtr e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail(errc::bad_expression, "trailing input at '" + rest() + "'");
    return e;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  std::string rest() const { return s_.substr(pos_); }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  ExprPtr expr() {
    ExprPtr e = term();
    while (true) {
      if (consume('+'))
        e = std::make_shared<Binary>('+', e, term());
      else if (consume('-'))
        e = std::make_shared<Binary>('-', e, term());
      else
        return e;
    }
  }
  ExprPtr term() {
    ExprPtr e = factor();
    while (true) {
      if (consume('*'))
        e = std::make_shared<Binary>('*', e, factor());
      else if (consume('/'))
        e = std::make_shared<Binary>('/', e, factor());
      else
        return e;
    }
  }
  ExprPtr factor() {
    if (consume('-')) return std::make_shared<Binary>('-', std::make_shared<Num>(0.0), factor());
    ExprPtr base = primary();
    if (consume('^')) return std::make_shared<Binary>('^', base, factor());
    return base;
  }
  ExprPtr primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail(errc::bad_expression, "unexpected end of expression");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (consume('(')) {
      ExprPtr e = expr();
      if (!consume(')')) fail(errc::bad_expression, "expected ')'");
      return e;
    }
    std::string ident = identifier();
    if (ident == "t") return std::make_shared<Var>();
    if (ident == "e") return std::make_shared<Num>(std::exp(1.0));
    if (ident == "pi") return std::make_shared<Num>(3.14159265358979323846);
    if (ident == "exp" || ident == "log" || ident == "sqrt" || ident == "pow") {
      if (!consume('(')) fail(errc::bad_expression, "expected '(' after " + ident);
      ExprPtr a = expr();
      if (ident == "pow") {
        if (!consume(',')) fail(errc::bad_expression, "pow takes two arguments");
        ExprPtr b = expr();
        if (!consume(')')) fail(errc::bad_expression, "expected ')'");
        return std::make_shared<Binary>('^', a, b);
      }
      if (!consume(')')) fail(errc::bad_expression, "expected ')'");
      return std::make_shared<Call>(ident, a);
    }
    fail(errc::bad_expression, "unknown identifier '" + ident + "'");
  }
  ExprPtr number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[end])) ||
                               s_[end] == '.' || s_[end] == 'e' || s_[end] == 'E' ||
                               ((s_[end] == '+' || s_[end] == '-') && end > pos_ &&
                                (s_[end - 1] == 'e' || s_[end - 1] == 'E'))))
      ++end;
    const std::string text = s_.substr(pos_, end - pos_);
    try {
      const double v = std::stod(text);
      pos_ = end;
      return std::make_shared<Num>(v);
    } catch (const std::exception&) {
      fail(errc::bad_expression, "bad number '" + text + "'");
    }
  }
  std::string identifier() {
    skip_ws();
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
      ++end;
    if (end == pos_)
      fail(errc::bad_expression, std::string("unexpected character '") + s_[pos_] + "'");
    std::string ident = s_.substr(pos_, end - pos_);
    pos_ = end;
    return ident;
  }
};

}  // namespace

std::function<double(double)> parse_expression(const std::string& expr) {
  ExprPtr tree = Parser(expr).parse();
  return [tree](double t) { return tree->eval({t, 1.0}).v; };
}

RegressionLoss parse_loss_expression(const std::string& name, const std::string& expr) {
  ExprPtr tree = Parser(expr).parse();
  RegressionLoss loss;
  loss.name = name;
  loss.g = [tree](double t) { return tree->eval({t, 1.0}).v; };
  loss.g_prime = [tree](double t) { return tree->eval({t, 1.0}).d; };
  auto gp = loss.g_prime;
  loss.g_double_prime = [gp](double t) {
    const double h = 1e-5;
    return (gp(t + h) - gp(t - h)) / (2.0 * h);
  };

  const double g0 = loss.g(0.0), gp0 = loss.g_prime(0.0);
  if (!std::isfinite(g0) || std::abs(g0) > 1e-9)
    fail(errc::bad_expression, "loss must satisfy g(0) = 0, got " + std::to_string(g0));
  if (!std::isfinite(gp0) || std::abs(gp0) > 1e-9)
    fail(errc::bad_expression, "loss must satisfy g'(0) = 0, got " + std::to_string(gp0));

  for (int i = 0; i <= 200; ++i) {
    const double t = -10.0 + 0.1 * i;
    if (loss.g_double_prime(t) < -1e-9) {
      loss.convexity_warning = true;
      break;
    }
  }
  return loss;
}

RegressionLoss resolve_loss(const std::string& name_or_expr) {
  if (is_builtin_loss(name_or_expr)) return make_builtin_loss(name_or_expr);
  return parse_loss_expression("custom", name_or_expr);
}

}  // namespace gfn
