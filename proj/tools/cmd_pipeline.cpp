#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "cli_common.hpp"
#include "focusrl/jsonl.hpp"
#include "focusrl/pipeline.hpp"
#include "focusrl/provider.hpp"

#ifndef FOCUSRL_PROMPT_DIR
#define FOCUSRL_PROMPT_DIR "assets/prompts"
#endif

namespace focusrl::cli {
namespace {

using jsonl::Json;
namespace pl = pipeline;

// pipeline run ----------------------------------------------------------------

struct RunOptions {
  pl::StageConfig cfg;
  std::string stage;
  std::string provider = "stub";
  std::string stub_config;
  std::string judge = "rule";
  int retries = 3;
  int backoff_ms = 500;
  std::size_t max_in_flight = 4;
  int timeout_s = 120;
};

std::unique_ptr<Provider> make_provider(const RunOptions& opt) {
  if (opt.provider == "stub") {
    if (opt.stub_config.empty()) {
      throw std::invalid_argument("--provider stub needs --stub-config");
    }
    std::ifstream in(opt.stub_config);
    if (!in) throw jsonl::IoError("cannot open " + opt.stub_config);
    std::stringstream ss;
    ss << in.rdbuf();
    const Json j = Json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw std::invalid_argument(opt.stub_config + " is not valid JSON");
    return StubProvider::from_json(j);
  }
  auto cfg = HttpProviderConfig::from_env();
  cfg.model = opt.cfg.model;
  cfg.max_retries = opt.retries;
  cfg.initial_backoff = std::chrono::milliseconds(opt.backoff_ms);
  cfg.max_in_flight = opt.max_in_flight;
  cfg.timeout = std::chrono::seconds(opt.timeout_s);
  return std::make_unique<HttpProvider>(cfg);
}

int run_pipeline_stage(RunOptions opt) {
  const auto stage = pl::parse_stage(opt.stage);
  if (!stage) throw std::invalid_argument("unknown stage " + opt.stage);
  opt.cfg.stage = *stage;
  opt.cfg.judge_mode = opt.judge == "llm" ? pl::JudgeMode::Llm : pl::JudgeMode::Rule;
  const bool needs_provider = *stage == pl::Stage::Generate || *stage == pl::Stage::Reconstruct ||
                              (*stage == pl::Stage::Judge && opt.cfg.judge_mode == pl::JudgeMode::Llm) ||
                              (*stage == pl::Stage::Filter && opt.cfg.llm_filter);
  std::unique_ptr<Provider> provider;
  if (needs_provider) provider = make_provider(opt);

  const auto report = pl::run_stage(opt.cfg, provider.get());
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::size_t shown = 0;
  for (const auto& e : report.errors) {
    if (++shown > 20) {
      std::cerr << "... " << report.errors.size() - 20 << " more in "
                << pl::errors_path(opt.cfg.output).string() << '\n';
      break;
    }
    std::cerr << "line " << e.line << (e.id.empty() ? "" : " (id " + e.id + ")") << ": "
              << pl::to_string(e.kind) << ": " << e.message << '\n';
  }
  std::cout << "stage " << pl::to_string(report.stage) << ": " << report.total << " records, "
            << report.skipped << " already done, " << report.processed << " processed, "
            << report.failed() << " failed";
  if (report.failed() > 0) {
    std::cout << " (validation " << report.count(pl::ErrorKind::Validation) << ", provider "
              << report.count(pl::ErrorKind::Provider) << ", io "
              << report.count(pl::ErrorKind::Io) << ")";
  }
  std::cout << '\n';
  if (report.count(pl::ErrorKind::Io) > 0) return kIo;
  if (report.count(pl::ErrorKind::Provider) > 0) return kProvider;
  if (report.count(pl::ErrorKind::Validation) > 0) return kValidation;
  return kOk;
}

// pipeline select -------------------------------------------------------------

struct SelectOptions {
  std::string input;
  std::string rl_out;
  std::string cold_out;
  std::size_t total = 0;
  std::uint64_t seed = 0;
  pl::BucketThresholds thresholds;
};

int run_select(const SelectOptions& opt) {
  opt.thresholds.validate();
  const auto in = jsonl::read_file(opt.input);
  std::size_t failed = in.errors.size();
  for (const auto& e : in.errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
  std::vector<pl::SampleRecord> records;
  for (std::size_t i = 0; i < in.records.size(); ++i) {
    try {
      records.push_back(pl::SampleRecord::from_json(in.records[i]));
    } catch (const std::exception& e) {
      ++failed;
      std::cerr << "line " << in.lines[i] << ": " << e.what() << '\n';
    }
  }
  if (records.empty()) {
    std::cerr << "error: no records in " << opt.input << '\n';
    return kValidation;
  }
  auto bucketed = pl::bucket_samples(std::move(records), opt.thresholds);
  for (const auto& w : bucketed.warnings) std::cerr << "warning: " << w << '\n';
  const auto sel = pl::sample_rl_set(bucketed.records, opt.total, opt.seed);
  for (const auto& w : sel.warnings) std::cerr << "warning: " << w << '\n';

  std::unordered_map<std::string, const pl::SampleRecord*> by_id;
  for (const auto& r : bucketed.records) by_id.emplace(r.id, &r);
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<Json> out;
    for (const auto& id : ids) out.push_back(by_id.at(id)->to_json());
    return out;
  };
  const Json meta{{"seed", opt.seed},
                  {"total", opt.total},
                  {"hi", opt.thresholds.hi},
                  {"lo", opt.thresholds.lo},
                  {"easy", sel.counts[0]},
                  {"medium", sel.counts[1]},
                  {"hard", sel.counts[2]}};
  jsonl::write_file(opt.rl_out, jsonl::make_header("focusrl.rl_set", meta), collect(sel.rl_ids));
  if (!opt.cold_out.empty()) {
    jsonl::write_file(opt.cold_out, jsonl::make_header("focusrl.cold_start_set", meta),
                      collect(sel.cold_start_ids));
  }
  std::cout << "rl set: " << sel.rl_ids.size() << " (easy " << sel.counts[0] << ", medium "
            << sel.counts[1] << ", hard " << sel.counts[2] << "); cold-start "
            << sel.cold_start_ids.size() << '\n';
  return failed == 0 ? kOk : kPartial;
}

// chart-id --------------------------------------------------------------------

struct ChartIdOptions {
  std::string input;
  std::string output;
  std::vector<int> scores;
  double threshold = pl::kHidThreshold;
  bool keep_all = false;
};

pl::ChartIdScores scores_from_json(const Json& j) {
  auto get = [&](const char* k) {
    if (!j.contains(k) || !j[k].is_number_integer()) {
      throw std::invalid_argument(std::string("field '") + k + "' must be an integer");
    }
    return j[k].get<int>();
  };
  pl::ChartIdScores s{get("s_rich"), get("s_eff"), get("s_clar"), get("s_inter")};
  s.validate();
  return s;
}

int run_chart_id(const ChartIdOptions& opt) {
  if (!opt.scores.empty()) {
    if (opt.scores.size() != 4) throw std::invalid_argument("--scores takes four integers");
    const pl::ChartIdScores s{opt.scores[0], opt.scores[1], opt.scores[2], opt.scores[3]};
    std::cout << pl::chart_id(s) << '\n';
    return kOk;
  }
  if (opt.input.empty() || opt.output.empty()) {
    throw std::invalid_argument("chart-id needs --scores or --input and --output");
  }
  const auto in = jsonl::read_file(opt.input);
  std::size_t failed = in.errors.size();
  for (const auto& e : in.errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
  std::vector<Json> out;
  std::size_t scored = 0, retained = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < in.records.size(); ++i) {
    try {
      const auto s = scores_from_json(in.records[i]);
      const pl::ChartRecord rec{"", s};
      const double id = pl::chart_id(s);
      const bool keep = !pl::filter_hid(std::span(&rec, 1), opt.threshold).empty();
      ++scored;
      sum += id;
      retained += keep;
      if (keep || opt.keep_all) {
        Json j = in.records[i];
        j["chart_id"] = id;
        if (opt.keep_all) j["hid"] = keep;
        out.push_back(std::move(j));
      }
    } catch (const std::exception& e) {
      ++failed;
      std::cerr << "line " << in.lines[i] << ": " << e.what() << '\n';
    }
  }
  if (scored == 0 && failed == 0) {
    std::cerr << "error: no records in " << opt.input << '\n';
    return kValidation;
  }
  jsonl::write_file(opt.output,
                    jsonl::make_header("focusrl.chart_id", Json{{"threshold", opt.threshold}}),
                    out);
  std::cout << "charts: " << scored << " scored, " << retained << " retained (chart_id >= "
            << opt.threshold << "), " << failed << " failed";
  if (scored > 0) std::cout << "; mean chart_id " << sum / static_cast<double>(scored);
  std::cout << '\n';
  if (failed == 0) return kOk;
  return scored == 0 ? kValidation : kPartial;
}

}  // namespace

void register_pipeline(CLI::App& app, Runner& run) {
  auto* cmd = app.add_subcommand("pipeline", "Focus-CoT data pipeline stages");
  cmd->require_subcommand(1);

  auto ro = std::make_shared<RunOptions>();
  ro->cfg.prompt_dir = FOCUSRL_PROMPT_DIR;
  auto& c = ro->cfg;
  auto* r = cmd->add_subcommand("run", "Run one stage: generate, judge, reconstruct or filter");
  r->add_option("--stage", ro->stage, "Stage")
      ->required()
      ->check(CLI::IsMember({"generate", "judge", "reconstruct", "filter"}));
  r->add_option("-i,--input", c.input, "Input records")->required();
  r->add_option("-o,--output", c.output, "Output records (append-only)")->required();
  r->add_flag("--resume", c.resume, "Continue an existing output, skipping finished ids");
  r->add_option("--provider", ro->provider, "Completion provider")
      ->check(CLI::IsMember({"stub", "http"}))
      ->capture_default_str();
  r->add_option("--stub-config", ro->stub_config, "Canned responses for the stub provider");
  r->add_option("--model", c.model, "Model name sent to the provider");
  r->add_option("--prompts", c.prompt_dir, "Prompt template directory")->capture_default_str();
  r->add_option("--paths", c.paths_per_sample, "Reasoning paths per sample")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  r->add_option("--temperature", c.temperature, "Sampling temperature for generate")
      ->check(CLI::Range(0.0, 2.0))
      ->capture_default_str();
  r->add_option("--max-tokens", c.max_tokens, "Completion length limit")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  r->add_option("--judge", ro->judge, "Correctness judge")
      ->check(CLI::IsMember({"rule", "llm"}))
      ->capture_default_str();
  r->add_option("--hi", c.thresholds.hi, "Easy iff pass count >= hi")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  r->add_option("--lo", c.thresholds.lo, "Hard iff pass count <= lo")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  r->add_option("--max-penalty", c.quality.max_penalty, "Quality filter redundancy limit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  r->add_flag("--llm-filter", c.llm_filter, "Add an LLM review to the quality filter");
  add_reward_flags(r, c.quality.reward);
  r->add_option("-j,--jobs", c.jobs, "Records processed concurrently")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  r->add_option("--retries", ro->retries, "HTTP retries per request")
      ->check(CLI::Range(0, 10))
      ->capture_default_str();
  r->add_option("--backoff-ms", ro->backoff_ms, "Initial retry backoff")
      ->check(CLI::Range(0, 600000))
      ->capture_default_str();
  r->add_option("--max-in-flight", ro->max_in_flight, "Concurrent HTTP requests")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1024}))
      ->capture_default_str();
  r->add_option("--timeout", ro->timeout_s, "HTTP timeout in seconds")
      ->check(CLI::Range(1, 3600))
      ->capture_default_str();
  r->callback([ro, &run] { run = [ro] { return run_pipeline_stage(*ro); }; });

  auto so = std::make_shared<SelectOptions>();
  auto* s = cmd->add_subcommand("select", "Bucket judged records and sample the RL set");
  s->add_option("-i,--input", so->input, "Judged records")->required();
  s->add_option("--rl-out", so->rl_out, "RL training set")->required();
  s->add_option("--cold-out", so->cold_out, "Cold-start set (remaining easy and hard)");
  s->add_option("--total", so->total, "RL set size")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", so->seed, "Sampling seed")->capture_default_str();
  s->add_option("--hi", so->thresholds.hi, "Easy iff pass count >= hi")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s->add_option("--lo", so->thresholds.lo, "Hard iff pass count <= lo")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s->callback([so, &run] { run = [so] { return run_select(*so); }; });
}

void register_chart_id(CLI::App& app, Runner& run) {
  auto opt = std::make_shared<ChartIdOptions>();
  auto* cmd = app.add_subcommand("chart-id", "Chart information density and HID filtering");
  cmd->add_option("-i,--input", opt->input, "Score records {id, s_rich, s_eff, s_clar, s_inter}");
  cmd->add_option("-o,--output", opt->output, "Retained records with chart_id");
  cmd->add_option("--scores", opt->scores, "Score one chart: four integers in [1, 5]")
      ->expected(4)
      ->delimiter(',');
  cmd->add_option("--threshold", opt->threshold, "Retain charts with chart_id >= threshold")
      ->check(CLI::Range(0.0, 5.0))
      ->capture_default_str();
  cmd->add_flag("--keep-all", opt->keep_all, "Write every chart with an hid flag");
  cmd->callback([opt, &run] { run = [opt] { return run_chart_id(*opt); }; });
}

}  // namespace focusrl::cli
