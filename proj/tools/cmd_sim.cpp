#include <cstdio>
#include <fstream>
#include <iostream>

#include "cli_common.hpp"
#include "focusrl/jsonl.hpp"
#include "focusrl/toysim.hpp"

namespace focusrl::cli {
namespace {

using jsonl::Json;
using toysim::IterationMetrics;

struct MetricField {
  const char* name;
  double IterationMetrics::*field;
};

constexpr MetricField kFields[] = {
    {"mean_reward", &IterationMetrics::mean_reward},
    {"mean_accuracy", &IterationMetrics::mean_accuracy},
    {"mean_p_redundancy", &IterationMetrics::mean_p_redundancy},
    {"mean_n_info", &IterationMetrics::mean_n_info},
    {"mean_beta", &IterationMetrics::mean_beta},
    {"focus_rate", &IterationMetrics::focus_rate},
    {"objective", &IterationMetrics::objective},
};

Json metrics_json(const IterationMetrics& m) {
  Json j{{"iteration", m.iteration}};
  for (const auto& f : kFields) j[f.name] = m.*(f.field);
  return j;
}

IterationMetrics metrics_from_json(const Json& j) {
  IterationMetrics m;
  m.iteration = j.at("iteration").get<std::size_t>();
  for (const auto& f : kFields) m.*(f.field) = j.at(f.name).get<double>();
  return m;
}

void print_windows(std::ostream& os, const toysim::TrainMetrics& m, std::size_t window) {
  const std::size_t n = m.size();
  const std::size_t w = std::min(window, n);
  if (w == 0) return;
  char buf[160];
  std::snprintf(buf, sizeof buf, "  %-18s %12s %12s\n", "metric", "first", "last");
  os << "window of " << w << " iterations\n" << buf;
  for (const auto& f : kFields) {
    std::snprintf(buf, sizeof buf, "  %-18s %12.6g %12.6g\n", f.name,
                  toysim::window_mean(m, 0, w, f.field), toysim::window_mean(m, n - w, n, f.field));
    os << buf;
  }
}

// gradcheck -------------------------------------------------------------------

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds{1};
  toysim::GradCheckConfig cfg;
};

int run_gradcheck(const GradcheckOptions& opt) {
  opt.cfg.objective.validate();
  bool all = true;
  for (auto seed : opt.seeds) {
    auto cfg = opt.cfg;
    cfg.seed = seed;
    const auto r = toysim::run_gradcheck(cfg);
    all = all && r.passed;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "seed %llu: %s max_rel_err=%.3e (worst param %zu, %zu checked, %.2f s)\n",
                  static_cast<unsigned long long>(seed), r.passed ? "PASS" : "FAIL",
                  r.max_relative_error, r.worst_index, r.checked, r.seconds);
    std::cout << buf;
  }
  return all ? kOk : kCheckFailed;
}

// simulate --------------------------------------------------------------------

struct SimulateOptions {
  toysim::TrainConfig cfg;
  bool no_efficiency = false;
  bool fixed_kl = false;
  std::string output;
  std::size_t window = 20;
};

Json train_header(const toysim::TrainConfig& c) {
  return Json{{"efficiency_reward", c.efficiency_reward},
              {"adaptive_kl", c.adaptive_kl},
              {"seed", c.seed},
              {"iterations", c.iterations},
              {"group_size", c.group_size},
              {"tasks_per_iteration", c.tasks_per_iteration},
              {"updates_per_iteration", c.updates_per_iteration},
              {"max_len", c.max_len},
              {"learning_rate", c.learning_rate},
              {"alpha", c.reward.alpha},
              {"tau", c.reward.tau},
              {"w1", c.reward.w1},
              {"w2", c.efficiency_reward ? c.reward.w2 : 0.0},
              {"beta", c.objective.beta},
              {"epsilon", c.objective.epsilon},
              {"std_floor", c.objective.std_floor}};
}

int run_simulate(const SimulateOptions& opt) {
  auto cfg = opt.cfg;
  cfg.efficiency_reward = !opt.no_efficiency;
  cfg.adaptive_kl = !opt.fixed_kl;
  cfg.validate();

  std::ofstream out(opt.output, std::ios::trunc | std::ios::binary);
  if (!out) throw jsonl::IoError("cannot open " + opt.output + " for writing");
  out << jsonl::dump_line(jsonl::make_header("focusrl.train_metrics", train_header(cfg))) << '\n';

  toysim::TrainMetrics metrics;
  try {
    metrics = toysim::train(cfg, [&out](const IterationMetrics& m) {
      out << jsonl::dump_line(metrics_json(m)) << '\n';
    });
  } catch (const toysim::DivergenceError& e) {
    out.flush();
    std::cerr << "error: training diverged at iteration " << e.iteration();
    if (!e.partial().empty()) {
      std::cerr << "; last finite iteration " << e.partial().back().iteration;
    }
    std::cerr << '\n';
    return kCheckFailed;
  }
  out.flush();
  if (!out) throw jsonl::IoError("write failed: " + opt.output);
  std::cout << "efficiency_reward=" << (cfg.efficiency_reward ? "on" : "off")
            << " adaptive_kl=" << (cfg.adaptive_kl ? "on" : "off") << " seed=" << cfg.seed
            << " iterations=" << metrics.size() << '\n';
  print_windows(std::cout, metrics, opt.window);
  return kOk;
}

// report ----------------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> inputs;
  std::size_t window = 20;
};

int run_report(const ReportOptions& opt) {
  int rc = kOk;
  for (const auto& path : opt.inputs) {
    const auto in = jsonl::read_file(path);
    toysim::TrainMetrics m;
    for (const auto& j : in.records) {
      try {
        m.push_back(metrics_from_json(j));
      } catch (const std::exception& e) {
        std::cerr << path << ": bad metrics record: " << e.what() << '\n';
        rc = kPartial;
      }
    }
    for (const auto& e : in.errors) {
      std::cerr << path << ": line " << e.line << ": " << e.message << '\n';
      rc = kPartial;
    }
    std::cout << path << '\n';
    if (in.header) {
      const auto& h = (*in.header)["header"];
      auto on_off = [](bool b) { return b ? "on" : "off"; };
      std::cout << "  efficiency_reward=" << on_off(h.value("efficiency_reward", true))
                << " adaptive_kl=" << on_off(h.value("adaptive_kl", true))
                << " seed=" << h.value("seed", 0) << '\n';
    }
    if (m.empty()) {
      std::cerr << path << ": no records\n";
      rc = kValidation;
      continue;
    }
    print_windows(std::cout, m, opt.window);
  }
  return rc;
}

}  // namespace

void register_gradcheck(CLI::App& app, Runner& run) {
  auto opt = std::make_shared<GradcheckOptions>();
  auto* cmd = app.add_subcommand("gradcheck",
                                 "Compare the analytic policy gradient with finite differences");
  cmd->add_option("--seed", opt->seeds, "Seed; repeat for several independent checks")
      ->capture_default_str();
  cmd->add_option("--max-len", opt->cfg.max_len, "Sequence length limit")
      ->check(CLI::Range(std::size_t{4}, std::size_t{64}))
      ->capture_default_str();
  cmd->add_option("--group-size", opt->cfg.group_size, "Responses per group")
      ->check(CLI::Range(std::size_t{2}, std::size_t{64}))
      ->capture_default_str();
  cmd->add_option("--tasks", opt->cfg.num_tasks, "Groups")
      ->check(CLI::Range(std::size_t{1}, std::size_t{64}))
      ->capture_default_str();
  cmd->add_option("--step", opt->cfg.h, "Finite-difference step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tolerance", opt->cfg.tolerance, "Maximum relative error")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--inject-sign-flip", opt->cfg.flip_analytic_sign,
                "Negate the analytic gradient (negative control)");
  add_objective_flags(cmd, opt->cfg.objective);
  cmd->callback([opt, &run] { run = [opt] { return run_gradcheck(*opt); }; });
}

void register_simulate(CLI::App& app, Runner& run) {
  auto opt = std::make_shared<SimulateOptions>();
  auto& c = opt->cfg;
  auto* cmd = app.add_subcommand("simulate", "Train the toy policy and write per-iteration metrics");
  cmd->add_option("-o,--output", opt->output, "Metrics file")->required();
  cmd->add_option("--seed", c.seed, "Seed")->capture_default_str();
  cmd->add_option("--iterations", c.iterations, "Iterations")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->capture_default_str();
  cmd->add_option("--group-size", c.group_size, "Responses per group")
      ->check(CLI::Range(std::size_t{2}, std::size_t{256}))
      ->capture_default_str();
  cmd->add_option("--tasks", c.tasks_per_iteration, "Groups per iteration")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  cmd->add_option("--updates", c.updates_per_iteration, "Gradient steps per sampled batch")
      ->check(CLI::Range(std::size_t{1}, std::size_t{64}))
      ->capture_default_str();
  cmd->add_option("--max-len", c.max_len, "Sequence length limit")
      ->check(CLI::Range(std::size_t{4}, std::size_t{64}))
      ->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "Learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--no-efficiency", opt->no_efficiency, "Ablation: drop the efficiency reward");
  cmd->add_flag("--fixed-kl", opt->fixed_kl, "Ablation: constant KL coefficient");
  cmd->add_option("--window", opt->window, "Summary window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_reward_flags(cmd, c.reward);
  add_objective_flags(cmd, c.objective);
  cmd->callback([opt, &run] { run = [opt] { return run_simulate(*opt); }; });
}

void register_report(CLI::App& app, Runner& run) {
  auto opt = std::make_shared<ReportOptions>();
  auto* cmd = app.add_subcommand("report", "Summarize metrics files written by simulate");
  cmd->add_option("inputs", opt->inputs, "Metrics files")->required();
  cmd->add_option("--window", opt->window, "Window size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->callback([opt, &run] { run = [opt] { return run_report(*opt); }; });
}

}  // namespace focusrl::cli
