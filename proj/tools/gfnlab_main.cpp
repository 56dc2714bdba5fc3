#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfn/config.hpp"
#include "gfn/envs.hpp"
#include "gfn/losses.hpp"
#include "gfn/oracle.hpp"
#include "gfn/runner.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  if (const char* env = std::getenv("GFNLAB_OUTDIR")) return env;
  return "runs";
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const gfn::ExperimentConfig config = gfn::load_config_file(config_path);
  const std::string run_dir =
      (fs::path(out_dir) / (fs::path(config_path).stem().string() + "_seed" +
                            std::to_string(config.training_seed)))
          .string();
  const gfn::RunSummary summary = gfn::run_experiment(config, run_dir);
  std::cout << gfn::summary_to_json(summary) << "\n";
  std::cout << "run dir: " << summary.run_dir << "\n";
  return 0;
}

int cmd_suite(const std::string& config_dir, const std::string& seeds_csv, int parallelism,
              const std::string& out_dir) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  std::istringstream seed_stream(seeds_csv);
  while (std::getline(seed_stream, token, ',')) seeds.push_back(std::stoull(token));
  if (seeds.empty()) seeds.push_back(0);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(config_dir))
    if (entry.path().extension() == ".cfg") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .cfg files under " << config_dir << "\n";
    return 2;
  }

  std::vector<gfn::ExperimentConfig> configs;
  std::vector<std::string> labels;
  for (const auto& file : files) {
    gfn::ExperimentConfig base = gfn::load_config_file(file);
    for (std::uint64_t seed : seeds) {
      base.training_seed = seed;
      configs.push_back(base);
      labels.push_back(fs::path(file).stem().string());
    }
  }
  const auto results = gfn::run_suite(configs, parallelism, out_dir);

  std::map<std::string, std::vector<const gfn::RunSummary*>> by_label;
  for (std::size_t i = 0; i < results.size(); ++i)
    by_label[labels[i]].push_back(&results[i]);
  int failures = 0;
  for (const auto& [label, runs] : by_label) {
    std::vector<double> l1, spearman, steps_to_modes;
    int ok = 0;
    for (const auto* r : runs) {
      if (!r->ok) {
        ++failures;
        std::cout << label << ": run failed: " << r->error << "\n";
        continue;
      }
      ++ok;
      if (r->final_report.l1_exact) l1.push_back(*r->final_report.l1_exact);
      if (r->final_report.spearman) spearman.push_back(*r->final_report.spearman);
      if (r->trajectories_to_all_modes)
        steps_to_modes.push_back(static_cast<double>(*r->trajectories_to_all_modes));
    }
    std::cout << label << ": " << ok << "/" << runs.size() << " runs ok";
    if (!l1.empty()) std::cout << ", median l1_exact " << median(l1);
    if (!spearman.empty()) std::cout << ", median spearman " << median(spearman);
    if (!steps_to_modes.empty())
      std::cout << ", median trajectories to all modes " << median(steps_to_modes) << " ("
                << steps_to_modes.size() << " reached)";
    std::cout << "\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_verify(double tol, int num_dags, const std::string& report_path,
               const std::string& out_dir) {
  const std::vector<std::string> losses = {"quadratic", "linex1", "linex_half", "shifted_cosh"};
  const std::vector<gfn::ObjectiveVariant> families = {
      gfn::ObjectiveVariant::FM, gfn::ObjectiveVariant::DB, gfn::ObjectiveVariant::TB,
      gfn::ObjectiveVariant::STB};
  const auto cases = gfn::correspondence_cases();

  std::ofstream report;
  if (!report_path.empty()) {
    report.open(report_path);
    report << "dag_seed,loss,weighting,side,f_builder,family,max_rel_error,pass\n";
  }

  int failed = 0;
  double worst = 0.0;
  for (int d = 0; d < num_dags; ++d) {
    gfn::RandomDagSpec spec;
    spec.layers = 2 + d % 4;  // 2..5
    spec.width = 2 + d % 3;   // 2..4
    spec.edge_density = 0.6;
    spec.seed = 1000 + static_cast<std::uint64_t>(d);
    const gfn::FlowDag dag = gfn::random_graded_dag(spec);
    gfn::TabularModel model(dag.num_states(), gfn::oracle_layout(dag));
    gfn::Rng rng(spec.seed);
    model.init_uniform(rng, 1.0);
    model.set_log_total_flow(rng.uniform(-0.5, 0.5) + std::log(dag.total_reward()));

    for (const auto& loss_name : losses) {
      const gfn::RegressionLoss loss = gfn::make_builtin_loss(loss_name);
      for (const auto& kase : cases) {
        for (const auto family : families) {
          const auto result =
              gfn::verify_grad_correspondence(dag, model, loss, kase, family, 0.9, tol);
          worst = std::max(worst, result.max_rel_error);
          if (!result.pass) {
            ++failed;
            const std::string dump =
                (fs::path(out_dir) / ("counterexample_dag_" + std::to_string(spec.seed) + ".txt"))
                    .string();
            fs::create_directories(out_dir);
            std::ofstream(dump) << gfn::dag_to_string(dag);
            std::cout << "FAIL dag_seed=" << spec.seed << " loss=" << loss_name
                      << " f=" << kase.f_builder << " family=" << gfn::objective_name(family)
                      << " rel_err=" << result.max_rel_error << " (dag written to " << dump
                      << ")\n";
          }
          if (report.is_open()) {
            report << spec.seed << ',' << loss_name << ','
                   << (kase.weighting == gfn::MuWeighting::forward ? "forward" : "backward") << ','
                   << (kase.differentiated == gfn::DiffSide::forward_params ? "forward_params"
                                                                            : "backward_params")
                   << ',' << kase.f_builder << ',' << gfn::objective_name(family) << ','
                   << result.max_rel_error << ',' << (result.pass ? 1 : 0) << '\n';
          }
        }
      }
    }
  }
  std::cout << "verify: " << num_dags << " dags x " << losses.size() << " losses x "
            << cases.size() << " cases x " << families.size() << " families, worst rel err "
            << worst << (failed == 0 ? " [pass]" : " [FAIL]") << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_classify(const std::string& name_or_expr) {
  const gfn::RegressionLoss loss = gfn::resolve_loss(name_or_expr);
  const auto probes = gfn::classification_probes(loss);
  std::printf("loss: %s\n", loss.name.c_str());
  if (loss.convexity_warning)
    std::printf("warning: numeric convexity check failed; this induces a pseudo f-divergence\n");
  std::printf("probe f(1e-8)        = %.6g\n", probes.f_near_zero);
  std::printf("probe f(1e8)/1e8     = %.6g\n", probes.slope_at_infinity);
  const auto cls = gfn::classify_loss(loss);
  std::printf("zero_forcing:  %s\n", cls.zero_forcing ? "true" : "false");
  std::printf("zero_avoiding: %s\n", cls.zero_avoiding ? "true" : "false");
  return 0;
}

int cmd_convert(const std::string& g_name, const std::string& f_expr, int points) {
  if (!g_name.empty()) {
    const gfn::RegressionLoss loss = gfn::resolve_loss(g_name);
    std::printf("# f(t) = t * int_1^t g'(log s)/s^2 ds for g = %s\n", loss.name.c_str());
    std::printf("%-14s %-18s\n", "t", "f(t)");
    for (int i = 0; i < points; ++i) {
      const double t = std::pow(10.0, -2.0 + 4.0 * i / (points - 1));
      std::printf("%-14.6g %-18.10g\n", t, gfn::f_from_g(loss, t));
    }
    return 0;
  }
  const auto f = gfn::parse_expression(f_expr);
  std::printf("# g(t) = f(e^t) - int_1^{e^t} f(s)/s ds for f = %s\n", f_expr.c_str());
  std::printf("%-14s %-18s\n", "t", "g(t)");
  for (int i = 0; i < points; ++i) {
    const double t = -3.0 + 6.0 * i / (points - 1);
    std::printf("%-14.6g %-18.10g\n", t, gfn::g_from_f(f, t));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GFlowNet loss-design laboratory"};
  app.require_subcommand(1);
  std::string out_dir = default_out_dir();
  app.add_option("--out", out_dir, "output directory (also via GFNLAB_OUTDIR)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "execute one seeded training run");
  run->add_option("config", config_path, "config file")->required();

  std::string config_dir, seeds = "0,1,2,3,4";
  int parallelism = 2;
  auto* suite = app.add_subcommand("suite", "run a directory of configs over seeds");
  suite->add_option("config-dir", config_dir, "directory of .cfg files")->required();
  suite->add_option("--seeds", seeds, "comma-separated seeds");
  suite->add_option("--parallel", parallelism, "concurrent runs");

  double tol = 1e-6;
  int num_dags = 20;
  std::string report_path;
  auto* verify = app.add_subcommand("verify", "gradient correspondence verification matrix");
  verify->add_option("--tol", tol, "max relative error");
  verify->add_option("--dags", num_dags, "number of seeded random dags");
  verify->add_option("--report", report_path, "write per-configuration csv report");

  std::string loss_arg;
  auto* classify = app.add_subcommand("classify", "zero-forcing/zero-avoiding classification");
  classify->add_option("loss", loss_arg, "built-in loss name or g(t) expression")->required();

  std::string conv_g, conv_f;
  int points = 13;
  auto* convert = app.add_subcommand("convert", "print a sampled table of the dual function");
  convert->add_option("--g", conv_g, "loss name or expression: print its f");
  convert->add_option("--f", conv_f, "f(t) expression: print its g");
  convert->add_option("--points", points, "table rows");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir);
    if (*suite) return cmd_suite(config_dir, seeds, parallelism, out_dir);
    if (*verify) return cmd_verify(tol, num_dags, report_path, out_dir);
    if (*classify) return cmd_classify(loss_arg);
    if (*convert) {
      if (conv_g.empty() == conv_f.empty()) {
        std::cerr << "convert needs exactly one of --g or --f\n";
        return 2;
      }
      return cmd_convert(conv_g, conv_f, points);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
