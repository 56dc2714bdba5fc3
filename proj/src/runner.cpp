#include "gfn/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <thread>

#include <json.hpp>

#include "gfn/losses.hpp"
#include "gfn/model.hpp"
#include "gfn/sampling.hpp"

namespace gfn {

namespace fs = std::filesystem;

Environment make_environment(const ExperimentConfig& config) {
  Environment env;
  env.type = config.env_type;
  if (config.env_type == "hypergrid") {
    HypergridSpec spec{config.env_d, config.env_h, config.env_r0, config.env_r1, config.env_r2};
    env.dag = make_hypergrid_dag(spec);
    env.input_dim = spec.D * spec.H;
    env.encode = hypergrid_encoder(spec);
  } else if (config.env_type == "bitseq") {
    BitSeqSpec spec;
    spec.n = config.env_n;
    spec.k = config.env_k;
    spec.delta = config.env_delta;
    spec.beta = config.env_beta;
    spec.targets =
        bitseq_random_targets(spec.n, config.env_num_targets, Rng(config.env_seed).split("targets"));
    env.dag = make_bitseq_dag(spec);
    env.input_dim =
        bitseq_slots(spec) * static_cast<std::int32_t>((std::int64_t{1} << spec.k) + 1);
    env.encode = bitseq_encoder(spec);
    env.bitseq = spec;
    env.has_modes = true;
    env.terminal_bits = [spec](StateId s) { return bitseq_bits(s, spec); };
  } else if (config.env_type == "random_dag") {
    RandomDagSpec spec;
    spec.layers = config.env_layers;
    spec.width = config.env_width;
    spec.edge_density = config.env_edge_density;
    spec.reward_law = config.env_reward_law == "uniform" ? RandomDagSpec::RewardLaw::uniform
                                                         : RandomDagSpec::RewardLaw::log_uniform;
    spec.reward_lo = config.env_reward_lo;
    spec.reward_hi = config.env_reward_hi;
    spec.seed = config.env_seed;
    env.dag = random_graded_dag(spec);
    env.input_dim = env.dag.num_states();
    env.encode = one_hot_encoder(env.dag.num_states());
  } else {
    fail(errc::bad_config, "unknown env.type '" + config.env_type + "'");
  }
  return env;
}

ObjectiveKind make_objective(const ExperimentConfig& config) {
  ObjectiveKind kind;
  kind.variant = objective_from_name(config.objective_kind);
  kind.backward =
      config.objective_backward == "learned" ? BackwardMode::learned : BackwardMode::uniform;
  kind.stb_lambda = config.objective_lambda;
  return kind;
}

namespace {

std::unique_ptr<Model> make_model(const ExperimentConfig& config, const Environment& env,
                                  const HeadLayout& layout, Rng rng) {
  if (config.model_kind == "tabular") {
    auto model = std::make_unique<TabularModel>(env.dag.num_states(), layout);
    model->init_uniform(rng, 1e-2);
    return model;
  }
  MlpSpec spec;
  spec.input_dim = env.input_dim;
  spec.hidden_layers = config.model_hidden_layers;
  spec.hidden_width = config.model_hidden_width;
  return std::make_unique<MlpModel>(spec, layout, env.encode, rng);
}

void append_objects(const ObjectiveKind& kind, const FlowDag& dag, const Trajectory& traj,
                    double base_weight, WeightedBatch& batch) {
  switch (kind.variant) {
    case ObjectiveVariant::FM:
      for (std::size_t i = 1; i + 1 < traj.size(); ++i)
        batch.items.push_back({TrainObject::make_state(traj[i]), base_weight});
      break;
    case ObjectiveVariant::DB:
    case ObjectiveVariant::FL_DB:
    case ObjectiveVariant::MOD_DB:
      for (std::size_t i = 0; i + 1 < traj.size(); ++i)
        batch.items.push_back({TrainObject::make_transition(traj[i], traj[i + 1]), base_weight});
      break;
    case ObjectiveVariant::TB:
      batch.items.push_back({TrainObject::make_complete(traj), base_weight});
      break;
    case ObjectiveVariant::STB:
    case ObjectiveVariant::FL_STB:
    case ObjectiveVariant::MOD_STB:
      for (auto& [sub, w] : subtb_object_weights(traj, kind.stb_lambda))
        batch.items.push_back({TrainObject::make_partial(std::move(sub)), base_weight * w});
      break;
  }
  (void)dag;
}

struct TopK {
  std::int32_t k;
  std::priority_queue<double, std::vector<double>, std::greater<>> heap;  // min-heap

  void add(double r) {
    if (static_cast<std::int32_t>(heap.size()) < k) {
      heap.push(r);
    } else if (!heap.empty() && r > heap.top()) {
      heap.pop();
      heap.push(r);
    }
  }
  std::optional<double> average() const {
    if (heap.empty()) return std::nullopt;
    auto copy = heap;
    double sum = 0.0;
    while (!copy.empty()) {
      sum += copy.top();
      copy.pop();
    }
    return sum / static_cast<double>(heap.size());
  }
};

struct ModeTracker {
  const Environment& env;
  std::int32_t delta;
  std::set<std::uint64_t> distinct;
  std::vector<char> found;
  std::int32_t num_found = 0;

  ModeTracker(const Environment& e, std::int32_t d)
      : env(e), delta(d), found(e.bitseq.targets.size(), 0) {}

  void add(StateId terminal) {
    const std::uint64_t bits = env.terminal_bits(terminal);
    if (!distinct.insert(bits).second) return;
    for (std::size_t m = 0; m < env.bitseq.targets.size(); ++m) {
      if (!found[m] && hamming(bits, env.bitseq.targets[m]) <= delta) {
        found[m] = 1;
        ++num_found;
      }
    }
  }
  bool all_found() const {
    return num_found == static_cast<std::int32_t>(env.bitseq.targets.size());
  }
};

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  const auto t_start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.config_hash = config_hash(config);

  Environment env = make_environment(config);
  const FlowDag& dag = env.dag;
  const ObjectiveKind kind = make_objective(config);
  const HeadLayout layout = required_layout(kind, dag);
  const RegressionLoss loss =
      config.loss_expr.empty() ? resolve_loss(config.loss_name)
                               : parse_loss_expression(config.loss_name, config.loss_expr);

  Rng root(config.training_seed);
  auto model = make_model(config, env, layout, root.split("init"));
  Rng sample_rng = root.split("sample");
  Rng eval_rng = root.split("eval");

  AdamState adam(*model, config.training_lr, config.training_z_lr);
  EvalContext ctx(*model, dag);

  SamplingStrategy strategy;
  strategy.mode = sampling_mode_from_name(config.sampler_mode);
  strategy.epsilon = config.sampler_epsilon;
  strategy.temperature = config.sampler_temperature;

  LossOptions loss_options{config.training_clamp_bound};
  LossStats loss_stats;

  const std::int64_t steps = config.resolved_steps();
  const std::int64_t window_size = config.resolved_window();
  const std::int32_t batch_size = config.training_batch_size;

  // rolling window of recent terminal states and rewards
  std::vector<StateId> window;
  std::vector<double> window_rewards;
  std::int64_t window_pos = 0;
  auto push_window = [&](StateId s) {
    if (static_cast<std::int64_t>(window.size()) < window_size) {
      window.push_back(s);
      window_rewards.push_back(dag.reward(s));
    } else {
      window[window_pos % window_size] = s;
      window_rewards[window_pos % window_size] = dag.reward(s);
    }
    ++window_pos;
  };

  TopK top_k{config.eval_top_k, {}};
  std::optional<ModeTracker> modes;
  if (env.has_modes) modes.emplace(env, config.resolved_eval_delta());

  // run directory + csv
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
    csv << kCsvHeader << '\n';
    if (env.has_modes) {
      std::ofstream targets(fs::path(out_dir) / "targets.hex");
      for (std::uint64_t m : env.bitseq.targets) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%0*llx", (env.bitseq.n + 3) / 4,
                      static_cast<unsigned long long>(m));
        targets << buf << '\n';
      }
    }
    summary.run_dir = out_dir;
  }

  std::vector<StateId> test_states;  // spearman mc test set
  if (config.eval_spearman == "mc") {
    const auto& terms = dag.terminating_states();
    if (static_cast<std::int32_t>(terms.size()) <= config.eval_test_set_size) {
      test_states = terms;
    } else {
      Rng pick = eval_rng.split("test_set");
      std::set<StateId> chosen;
      while (static_cast<std::int32_t>(chosen.size()) < config.eval_test_set_size)
        chosen.insert(terms[pick.next_below(terms.size())]);
      test_states.assign(chosen.begin(), chosen.end());
    }
  }

  std::int64_t trajectories_seen = 0;
  double loss_accum = 0.0;
  std::int64_t loss_count = 0;
  EvalReport report;

  auto evaluate = [&](std::int64_t step) {
    report = EvalReport{};
    report.step = step;
    report.trajectories = trajectories_seen;
    report.loss = loss_count > 0 ? loss_accum / static_cast<double>(loss_count) : 0.0;
    report.objective = objective_name(kind.variant);
    report.seed = config.training_seed;
    try {
      report.l1_exact = l1_exact(*model, dag);
    } catch (const Error&) {
      // exact distribution infeasible at this size
    }
    if (!window.empty()) {
      const std::size_t n = std::min<std::size_t>(window.size(), window_size);
      report.l1_empirical = l1_empirical(std::span<const StateId>(window.data(), n), dag);
      double avg = 0.0;
      for (std::size_t i = 0; i < n; ++i) avg += window_rewards[i];
      report.avg_reward = avg / static_cast<double>(n);
    }
    if (config.eval_spearman == "exact") {
      report.spearman = spearman_exact(*model, dag);
    } else if (config.eval_spearman == "mc") {
      Rng mc_rng = eval_rng.split(static_cast<std::uint64_t>(step));
      report.spearman = spearman_mc(*model, dag, test_states, config.eval_spearman_n,
                                    layout.bwd > 0, mc_rng);
    }
    if (modes) report.modes_found = modes->num_found;
    report.avg_top_k_reward = top_k.average();
    if (csv.is_open()) append_csv_row(csv, report);
    loss_accum = 0.0;
    loss_count = 0;
  };

  for (std::int64_t step = 1; step <= steps; ++step) {
    model->zero_grads();
    ctx.reset();
    WeightedBatch batch;
    const double base_weight = 1.0 / static_cast<double>(batch_size);
    for (std::int32_t b = 0; b < batch_size; ++b) {
      const Trajectory traj = sample_forward_trajectory(dag, ctx, strategy, sample_rng);
      const StateId terminal = traj[traj.size() - 2];
      push_window(terminal);
      top_k.add(dag.reward(terminal));
      if (modes) {
        modes->add(terminal);
        if (modes->all_found() && !summary.steps_to_all_modes) {
          summary.steps_to_all_modes = step;
          summary.trajectories_to_all_modes = trajectories_seen + b + 1;
        }
      }
      append_objects(kind, dag, traj, base_weight, batch);
    }
    trajectories_seen += batch_size;

    const double batch_loss =
        unified_loss(batch, kind, ctx, loss, loss_options, &loss_stats, /*with_grad=*/true);
    if (!std::isfinite(batch_loss))
      fail(errc::numerical_divergence,
           "loss became non-finite at step " + std::to_string(step));
    loss_accum += batch_loss;
    ++loss_count;
    ctx.backward();
    if (config.training_grad_clip > 0.0) clip_grad_norm(*model, config.training_grad_clip);
    adam.step(*model);

    if (step % config.eval_interval == 0 || step == steps) evaluate(step);
  }

  summary.trajectories = trajectories_seen;
  summary.clamp_events = loss_stats.clamp_events;
  summary.final_report = report;
  summary.excluded_as_collapse = report.spearman && *report.spearman < 0.0;
  summary.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (!out_dir.empty()) {
    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), *model, summary.config_hash);
    std::ofstream json_out(fs::path(out_dir) / "summary.json");
    json_out << summary_to_json(summary) << '\n';
    std::ofstream config_out(fs::path(out_dir) / "config.cfg");
    config_out << serialize_config(config);
  }
  return summary;
}

std::vector<RunSummary> run_suite(const std::vector<ExperimentConfig>& configs,
                                  std::int32_t parallelism, const std::string& out_dir) {
  std::vector<RunSummary> results(configs.size());
  std::atomic<std::size_t> next{0};
  const std::int32_t workers =
      std::max(1, std::min<std::int32_t>(parallelism, static_cast<std::int32_t>(configs.size())));
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      std::string dir;
      if (!out_dir.empty())
        dir = (fs::path(out_dir) / ("run_" + std::to_string(i) + "_seed" +
                                    std::to_string(configs[i].training_seed)))
                  .string();
      try {
        results[i] = run_experiment(configs[i], dir);
      } catch (const std::exception& e) {
        results[i].ok = false;
        results[i].error = e.what();
        results[i].config_hash = config_hash(configs[i]);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::int32_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return results;
}

std::string summary_to_json(const RunSummary& s) {
  nlohmann::json j;
  j["ok"] = s.ok;
  if (!s.error.empty()) j["error"] = s.error;
  j["config_hash"] = s.config_hash;
  j["wall_time_s"] = s.wall_time_s;
  j["trajectories"] = s.trajectories;
  j["clamp_events"] = s.clamp_events;
  j["excluded_as_collapse"] = s.excluded_as_collapse;
  if (s.steps_to_all_modes) j["steps_to_all_modes"] = *s.steps_to_all_modes;
  if (s.trajectories_to_all_modes) j["trajectories_to_all_modes"] = *s.trajectories_to_all_modes;
  nlohmann::json f;
  f["step"] = s.final_report.step;
  f["trajectories"] = s.final_report.trajectories;
  f["loss"] = s.final_report.loss;
  f["objective"] = s.final_report.objective;
  if (s.final_report.l1_exact) f["l1_exact"] = *s.final_report.l1_exact;
  if (s.final_report.l1_empirical) f["l1_empirical"] = *s.final_report.l1_empirical;
  if (s.final_report.spearman) f["spearman"] = *s.final_report.spearman;
  if (s.final_report.modes_found) f["modes_found"] = *s.final_report.modes_found;
  f["avg_reward"] = s.final_report.avg_reward;
  if (s.final_report.avg_top_k_reward) f["avg_topk_reward"] = *s.final_report.avg_top_k_reward;
  f["seed"] = s.final_report.seed;
  j["final"] = f;
  return j.dump(2);
}

}  // namespace gfn
