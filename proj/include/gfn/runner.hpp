#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gfn/config.hpp"
#include "gfn/envs.hpp"
#include "gfn/metrics.hpp"
#include "gfn/objectives.hpp"

namespace gfn {

struct RunSummary {
  bool ok = true;
  std::string error;
  EvalReport final_report;
  double wall_time_s = 0.0;
  std::int64_t trajectories = 0;
  std::optional<std::int64_t> steps_to_all_modes;
  std::optional<std::int64_t> trajectories_to_all_modes;
  bool excluded_as_collapse = false;
  std::uint64_t config_hash = 0;
  std::int64_t clamp_events = 0;
  std::string run_dir;
};

Environment make_environment(const ExperimentConfig& config);
ObjectiveKind make_objective(const ExperimentConfig& config);

// Seeded deterministic training loop: sample batch -> training objects ->
// unified loss -> gradients -> adam, evaluating on schedule into
// <run_dir>/metrics.csv and writing summary.json plus the final checkpoint.
// Empty out_dir disables all file output.
RunSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir);

// Independent runs, `parallelism` at a time; per-run failures are collected,
// not fatal to siblings.
std::vector<RunSummary> run_suite(const std::vector<ExperimentConfig>& configs,
                                  std::int32_t parallelism, const std::string& out_dir);

std::string summary_to_json(const RunSummary& summary);

}  // namespace gfn
