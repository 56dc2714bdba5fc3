#pragma once

#include <cstdint>
#include <string>

namespace gfn {

// Flat, typed key-value experiment description. Parsing rejects unknown
// keys; serialization is canonical (registry order, %.17g doubles) so the
// config hash changes exactly when a semantic field does.
struct ExperimentConfig {
  // env
  std::string env_type = "hypergrid";  // hypergrid | bitseq | random_dag
  std::int32_t env_d = 2;
  std::int32_t env_h = 8;
  double env_r0 = 1e-4;
  double env_r1 = -9.9e-5;
  double env_r2 = 1.0 - 1e-6;
  std::int32_t env_n = 12;
  std::int32_t env_k = 4;
  std::int32_t env_num_targets = 4;
  std::int32_t env_delta = 2;
  double env_beta = 2.0;
  std::uint64_t env_seed = 1;
  std::int32_t env_layers = 3;
  std::int32_t env_width = 3;
  double env_edge_density = 0.5;
  std::string env_reward_law = "log_uniform";
  double env_reward_lo = 0.1;
  double env_reward_hi = 10.0;

  // objective
  std::string objective_kind = "tb";
  std::string objective_backward = "uniform";  // uniform | learned
  double objective_lambda = 0.9;

  // loss
  std::string loss_name = "quadratic";
  std::string loss_expr;  // custom expression when non-empty

  // model
  std::string model_kind = "mlp";  // tabular | mlp
  std::int32_t model_hidden_layers = 2;
  std::int32_t model_hidden_width = 64;

  // sampler
  std::string sampler_mode = "on_policy";
  double sampler_epsilon = 0.0;
  double sampler_temperature = 1.0;

  // training; exactly one of steps / trajectories may be set (> 0)
  std::int64_t training_steps = 0;
  std::int64_t training_trajectories = 0;
  std::int32_t training_batch_size = 16;
  double training_lr = 1e-3;
  double training_z_lr = 0.1;
  std::uint64_t training_seed = 0;
  double training_clamp_bound = 30.0;
  double training_grad_clip = 0.0;  // 0 = off

  // eval
  std::int64_t eval_interval = 500;  // optimizer steps
  std::int64_t eval_window = 0;      // trajectories; 0 = 10% of the budget
  std::string eval_spearman = "none";  // none | exact | mc
  std::int32_t eval_spearman_n = 10;
  std::int32_t eval_test_set_size = 512;
  std::int32_t eval_delta = -1;  // -1 = env.delta
  std::int32_t eval_top_k = 100;

  std::int64_t resolved_steps() const;
  std::int64_t resolved_trajectories() const;
  std::int64_t resolved_window() const;
  std::int32_t resolved_eval_delta() const { return eval_delta < 0 ? env_delta : eval_delta; }
};

// Throws bad_config on unknown keys, type errors, a missing training.seed,
// or both budget keys set.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

std::string serialize_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace gfn
