#include "gfn/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "gfn/error.hpp"
#include "gfn/rng.hpp"

namespace gfn {

std::int64_t ExperimentConfig::resolved_steps() const {
  if (training_steps > 0) return training_steps;
  const std::int64_t traj = training_trajectories > 0 ? training_trajectories : 50'000;
  return (traj + training_batch_size - 1) / training_batch_size;
}

std::int64_t ExperimentConfig::resolved_trajectories() const {
  return resolved_steps() * training_batch_size;
}

std::int64_t ExperimentConfig::resolved_window() const {
  if (eval_window > 0) return eval_window;
  return std::max<std::int64_t>(1, resolved_trajectories() / 10);
}

namespace {

struct Field {
  std::string key;
  enum class Type { i32, i64, u64, f64, str } type;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    fail(errc::bad_config, "bad integer for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(errc::bad_config, "bad integer for " + key + ": '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(errc::bad_config, "bad number for " + key + ": '" + value + "'");
  }
}

#define FIELD_I32(key, member)                                                       \
  {key, Field::Type::i32,                                                            \
   [](ExperimentConfig& c, const std::string& v) { c.member = parse_int<std::int32_t>(key, v); }, \
   [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_I64(key, member)                                                       \
  {key, Field::Type::i64,                                                            \
   [](ExperimentConfig& c, const std::string& v) { c.member = parse_int<std::int64_t>(key, v); }, \
   [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_U64(key, member)                                                        \
  {key, Field::Type::u64,                                                             \
   [](ExperimentConfig& c, const std::string& v) { c.member = parse_u64(key, v); },   \
   [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_F64(key, member)                                                        \
  {key, Field::Type::f64,                                                             \
   [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(key, v); }, \
   [](const ExperimentConfig& c) { return fmt_double(c.member); }}
#define FIELD_STR(key, member)                                                    \
  {key, Field::Type::str,                                                         \
   [](ExperimentConfig& c, const std::string& v) { c.member = v; },               \
   [](const ExperimentConfig& c) { return c.member; }}

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      FIELD_STR("env.type", env_type),
      FIELD_I32("env.D", env_d),
      FIELD_I32("env.H", env_h),
      FIELD_F64("env.R0", env_r0),
      FIELD_F64("env.R1", env_r1),
      FIELD_F64("env.R2", env_r2),
      FIELD_I32("env.n", env_n),
      FIELD_I32("env.k", env_k),
      FIELD_I32("env.num_targets", env_num_targets),
      FIELD_I32("env.delta", env_delta),
      FIELD_F64("env.beta", env_beta),
      FIELD_U64("env.seed", env_seed),
      FIELD_I32("env.layers", env_layers),
      FIELD_I32("env.width", env_width),
      FIELD_F64("env.edge_density", env_edge_density),
      FIELD_STR("env.reward_law", env_reward_law),
      FIELD_F64("env.reward_lo", env_reward_lo),
      FIELD_F64("env.reward_hi", env_reward_hi),
      FIELD_STR("objective.kind", objective_kind),
      FIELD_STR("objective.backward", objective_backward),
      FIELD_F64("objective.lambda", objective_lambda),
      FIELD_STR("loss.name", loss_name),
      FIELD_STR("loss.expr", loss_expr),
      FIELD_STR("model.kind", model_kind),
      FIELD_I32("model.hidden_layers", model_hidden_layers),
      FIELD_I32("model.hidden_width", model_hidden_width),
      FIELD_STR("sampler.mode", sampler_mode),
      FIELD_F64("sampler.epsilon", sampler_epsilon),
      FIELD_F64("sampler.temperature", sampler_temperature),
      FIELD_I64("training.steps", training_steps),
      FIELD_I64("training.trajectories", training_trajectories),
      FIELD_I32("training.batch_size", training_batch_size),
      FIELD_F64("training.lr", training_lr),
      FIELD_F64("training.z_lr", training_z_lr),
      FIELD_U64("training.seed", training_seed),
      FIELD_F64("training.clamp_bound", training_clamp_bound),
      FIELD_F64("training.grad_clip", training_grad_clip),
      FIELD_I64("eval.interval", eval_interval),
      FIELD_I64("eval.window", eval_window),
      FIELD_STR("eval.spearman", eval_spearman),
      FIELD_I32("eval.spearman_n", eval_spearman_n),
      FIELD_I32("eval.test_set_size", eval_test_set_size),
      FIELD_I32("eval.delta", eval_delta),
      FIELD_I32("eval.top_k", eval_top_k),
  };
  return fields;
}

void validate(const ExperimentConfig& c, bool saw_seed) {
  if (!saw_seed) fail(errc::bad_config, "training.seed is mandatory");
  if (c.training_steps > 0 && c.training_trajectories > 0)
    fail(errc::bad_config, "set training.steps or training.trajectories, not both");
  if (c.env_type != "hypergrid" && c.env_type != "bitseq" && c.env_type != "random_dag")
    fail(errc::bad_config, "unknown env.type '" + c.env_type + "'");
  if (c.objective_backward != "uniform" && c.objective_backward != "learned")
    fail(errc::bad_config, "objective.backward must be uniform or learned");
  if (c.model_kind != "tabular" && c.model_kind != "mlp")
    fail(errc::bad_config, "model.kind must be tabular or mlp");
  if (c.eval_spearman != "none" && c.eval_spearman != "exact" && c.eval_spearman != "mc")
    fail(errc::bad_config, "eval.spearman must be none, exact or mc");
  if (c.training_batch_size <= 0) fail(errc::bad_config, "training.batch_size must be positive");
  if (c.objective_lambda <= 0.0) fail(errc::bad_config, "objective.lambda must be positive");
  if (c.sampler_epsilon < 0.0 || c.sampler_epsilon > 1.0)
    fail(errc::bad_config, "sampler.epsilon must be in [0, 1]");
  if (c.sampler_temperature <= 0.0) fail(errc::bad_config, "sampler.temperature must be positive");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  bool saw_seed = false;
  std::istringstream is(text);
  std::string line;
  std::int32_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(errc::bad_config, "line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const Field& f : registry()) {
      if (f.key == key) {
        f.set(config, value);
        known = true;
        break;
      }
    }
    // alias kept for the training-section spelling of the exploration rate
    if (!known && key == "training.epsilon") {
      config.sampler_epsilon = parse_double(key, value);
      known = true;
    }
    if (!known) fail(errc::bad_config, "unknown key '" + key + "'");
    if (key == "training.seed") saw_seed = true;
  }
  validate(config, saw_seed);
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(errc::bad_config, "cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream os;
  for (const Field& f : registry()) os << f.key << " = " << f.get(config) << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return Rng::fnv1a(serialize_config(config));
}

}  // namespace gfn
