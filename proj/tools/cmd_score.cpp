#include <iostream>
#include <optional>

#include "cli_common.hpp"
#include "focusrl/jsonl.hpp"

namespace focusrl::cli {
namespace {

using jsonl::Json;

struct ScoreOptions {
  std::string input;
  std::string output;
  RewardConfig reward;
  double std_floor = 1e-8;
  std::size_t jobs = 1;
};

struct Scored {
  std::optional<Json> record;
  std::vector<RewardBreakdown> breakdowns;
  std::string error;
};

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json breakdown_json(const RewardBreakdown& r) {
  return Json{{"format", std::string(to_string(r.format))},
              {"r_acc", r.r_relaxed_acc},
              {"r_format", r.r_format},
              {"r_efficiency", r.r_efficiency},
              {"p_tt", opt_json(r.p_tt)},
              {"p_bb", opt_json(r.p_bb)},
              {"p_tb", opt_json(r.p_tb)},
              {"p_redundancy", r.p_redundancy},
              {"n_ocr", r.cues.n_ocr},
              {"n_box", r.cues.n_box},
              {"n_info", r.cues.n_info},
              {"total", r.total}};
}

std::string scalar_text(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number()) return it->dump();
  throw std::invalid_argument(std::string("field '") + key + "' must be a string or number");
}

Scored score_record(const Json& rec, const ScoreOptions& opt) {
  Scored out;
  try {
    AnswerSpec spec;
    spec.ground_truth = scalar_text(rec, "ground_truth");
    if (rec.contains("answer_type") && !rec["answer_type"].is_null()) {
      const auto& at = rec["answer_type"];
      const auto t = at.is_string() ? parse_answer_type(at.get<std::string>()) : std::nullopt;
      if (!t) throw std::invalid_argument("unknown answer_type " + at.dump());
      spec.answer_type = *t;
    } else {
      spec.answer_type = infer_answer_type(spec.ground_truth);
    }
    spec.validate();

    const auto it = rec.find("responses");
    if (it == rec.end() || !it->is_array()) {
      throw std::invalid_argument("field 'responses' must be an array");
    }
    if (it->empty()) throw std::invalid_argument("no responses");
    std::vector<double> totals;
    Json scores = Json::array();
    for (const auto& resp : *it) {
      std::string text;
      if (resp.is_string()) {
        text = resp.get<std::string>();
      } else if (resp.is_object() && resp.contains("text") && resp["text"].is_string()) {
        text = resp["text"].get<std::string>();
      } else {
        throw std::invalid_argument("response must be a string or {\"text\": ...}");
      }
      const auto r = score_response(text, spec, opt.reward);
      totals.push_back(r.total);
      scores.push_back(breakdown_json(r));
      out.breakdowns.push_back(r);
    }
    Json j = rec;
    j["scores"] = std::move(scores);
    if (totals.size() >= 2) {
      j["advantages"] = group_advantages(totals, opt.std_floor);
    } else {
      j["advantages"] = nullptr;
    }
    out.record = std::move(j);
  } catch (const std::exception& e) {
    out.error = e.what();
    out.breakdowns.clear();
  }
  return out;
}

std::string record_label(const Json& rec, std::size_t line) {
  if (rec.contains("id") && (rec["id"].is_string() || rec["id"].is_number())) {
    return "line " + std::to_string(line) + " (id " +
           (rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump()) + ")";
  }
  return "line " + std::to_string(line);
}

int run_score(const ScoreOptions& opt) {
  opt.reward.validate();
  const auto in = jsonl::read_file(opt.input);
  const std::size_t n = in.records.size();
  if (n == 0 && in.errors.empty()) {
    std::cerr << "error: no records in " << opt.input << '\n';
    return kValidation;
  }

  std::vector<Scored> results(n);
  parallel_for(n, opt.jobs, [&](std::size_t i) { results[i] = score_record(in.records[i], opt); });

  std::size_t failed = in.errors.size();
  for (const auto& e : in.errors) {
    std::cerr << "line " << e.line << ": " << e.message << '\n';
  }
  std::vector<Json> ok;
  std::vector<double> totals, penalties;
  std::size_t n_focus = 0, n_plain = 0, n_malformed = 0;
  double sum_acc = 0, sum_fmt = 0, sum_eff = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = results[i];
    if (!r.record) {
      ++failed;
      std::cerr << record_label(in.records[i], in.lines[i]) << ": " << r.error << '\n';
      continue;
    }
    ok.push_back(std::move(*r.record));
    for (const auto& b : r.breakdowns) {
      totals.push_back(b.total);
      penalties.push_back(b.p_redundancy);
      sum_acc += b.r_relaxed_acc;
      sum_fmt += b.r_format;
      sum_eff += b.r_efficiency;
      n_focus += b.format == FormatClass::FocusCoT;
      n_plain += b.format == FormatClass::PlainCoT;
      n_malformed += b.format == FormatClass::Malformed;
    }
  }

  const Json header_cfg{{"alpha", opt.reward.alpha},
                        {"tau", opt.reward.tau},
                        {"w1", opt.reward.w1},
                        {"w2", opt.reward.w2},
                        {"box_pairs", opt.reward.box_pairs == BoxPairMode::All ? "all" : "overlapping"},
                        {"std_floor", opt.std_floor}};
  jsonl::write_file(opt.output, jsonl::make_header("focusrl.scored_rollout", header_cfg), ok);

  const double m = totals.empty() ? 1.0 : static_cast<double>(totals.size());
  double sum_total = 0, sum_p = 0;
  for (double v : totals) sum_total += v;
  for (double v : penalties) sum_p += v;
  std::cout << "records: " << ok.size() << " scored, " << failed << " failed\n"
            << "responses: " << totals.size() << " (focus_cot " << n_focus << ", plain_cot "
            << n_plain << ", malformed " << n_malformed << ")\n"
            << "mean total " << sum_total / m << "  acc " << sum_acc / m << "  format "
            << sum_fmt / m << "  efficiency " << sum_eff / m << "  p_redundancy " << sum_p / m
            << '\n';
  print_histogram(std::cout, "total reward", totals, 0.0, 1.0 + opt.reward.w1 + opt.reward.w2);
  print_histogram(std::cout, "p_redundancy", penalties, 0.0, 1.0);

  if (failed == 0) return kOk;
  return ok.empty() ? kValidation : kPartial;
}

}  // namespace

void register_score(CLI::App& app, Runner& run) {
  auto opt = std::make_shared<ScoreOptions>();
  auto* cmd = app.add_subcommand("score", "Score rollout groups: rewards and advantages");
  cmd->add_option("-i,--input", opt->input, "Rollout records, one JSON object per line")
      ->required();
  cmd->add_option("-o,--output", opt->output, "Scored records")->required();
  add_reward_flags(cmd, opt->reward);
  cmd->add_option("--std-floor", opt->std_floor, "Advantage std floor")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("-j,--jobs", opt->jobs, "Worker threads")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  cmd->callback([opt, &run] { run = [opt] { return run_score(*opt); }; });
}

}  // namespace focusrl::cli
