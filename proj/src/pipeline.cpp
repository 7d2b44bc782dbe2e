#include "focusrl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "rng.hpp"
#include "text_util.hpp"

namespace focusrl::pipeline {
namespace {

constexpr std::array<Bucket, 3> kBuckets = {Bucket::Easy, Bucket::Medium, Bucket::Hard};

std::size_t bucket_index(Bucket b) { return static_cast<std::size_t>(b); }

std::string require_string(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_string()) {
    throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

bool is_known_field(const std::string& k) {
  static const std::set<std::string> known = {
      "id", "image", "question", "ground_truth", "answer_type", "paths", "pass_count", "bucket"};
  return known.contains(k);
}

std::string load_template(const std::filesystem::path& dir, std::string_view name) {
  const auto path = dir / (std::string(name) + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw jsonl::IoError("cannot read prompt " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fill_template(std::string tmpl,
                          std::span<const std::pair<std::string, std::string>> vars) {
  for (const auto& [key, value] : vars) {
    const std::string ph = "{{" + key + "}}";
    std::size_t at = 0;
    while ((at = tmpl.find(ph, at)) != std::string::npos) {
      tmpl.replace(at, ph.size(), value);
      at += value.size();
    }
  }
  return tmpl;
}

struct Outcome {
  std::optional<Json> record;
  std::optional<RecordError> error;
  std::vector<std::string> warnings;
};

// Runs work(i) on up to `jobs` threads and hands results to commit(i, ...)
// strictly in index order, so output order does not depend on scheduling.
template <class Work, class Commit>
void for_each_ordered(std::size_t n, std::size_t jobs, Work work, Commit commit) {
  std::vector<std::optional<Outcome>> slots(n);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t committed = 0;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= n) return;
      Outcome o = work(i);
      std::lock_guard lock(mu);
      if (failure) return;
      slots[i] = std::move(o);
      try {
        while (committed < n && slots[committed]) {
          commit(committed, *slots[committed]);
          slots[committed].reset();
          ++committed;
        }
      } catch (...) {
        failure = std::current_exception();
        next = n;
        return;
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

bool stage_needs_provider(const StageConfig& cfg) {
  switch (cfg.stage) {
    case Stage::Generate:
    case Stage::Reconstruct:
      return true;
    case Stage::Judge:
      return cfg.judge_mode == JudgeMode::Llm;
    case Stage::Filter:
      return cfg.llm_filter;
  }
  return false;
}

Json call_log_json(const CallLog& c) {
  return Json{{"request_id", c.request_id}, {"attempt", c.attempt}, {"status", c.status},
              {"ok", c.ok},                 {"error", c.error},     {"elapsed_ms", c.elapsed_ms}};
}

}  // namespace

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::Easy:
      return "easy";
    case Bucket::Medium:
      return "medium";
    case Bucket::Hard:
      return "hard";
  }
  return "medium";
}

std::optional<Bucket> parse_bucket(std::string_view s) {
  const auto n = text::normalize_exact(s);
  for (Bucket b : kBuckets) {
    if (n == to_string(b)) return b;
  }
  return std::nullopt;
}

void SampleRecord::validate() const {
  if (id.empty()) throw std::invalid_argument("record id is empty");
  answer_spec().validate();
  if (pass_count) {
    if (*pass_count < 0) throw std::invalid_argument("pass_count must be >= 0");
    if (!paths.empty() && static_cast<std::size_t>(*pass_count) > paths.size()) {
      throw std::invalid_argument("pass_count exceeds the number of paths");
    }
  }
  if (bucket && !pass_count) throw std::invalid_argument("bucket set without pass_count");
}

Json SampleRecord::to_json() const {
  Json j = Json::object();
  j["id"] = id;
  j["image"] = image;
  j["question"] = question;
  j["ground_truth"] = ground_truth;
  j["answer_type"] = std::string(focusrl::to_string(answer_type));
  Json ps = Json::array();
  for (const auto& p : paths) {
    Json jp{{"text", p.text}};
    if (p.correct) jp["correct"] = *p.correct;
    ps.push_back(std::move(jp));
  }
  j["paths"] = std::move(ps);
  if (pass_count) j["pass_count"] = *pass_count;
  if (bucket) j["bucket"] = std::string(to_string(*bucket));
  for (const auto& [k, v] : extra.items()) {
    if (!is_known_field(k)) j[k] = v;
  }
  return j;
}

SampleRecord SampleRecord::from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  SampleRecord r;
  r.id = require_string(j, "id");
  r.question = require_string(j, "question");
  const auto gt = j.find("ground_truth");
  if (gt == j.end()) throw std::invalid_argument("missing field 'ground_truth'");
  if (gt->is_string()) {
    r.ground_truth = gt->get<std::string>();
  } else if (gt->is_number()) {
    r.ground_truth = gt->dump();
  } else {
    throw std::invalid_argument("field 'ground_truth' must be a string or number");
  }
  if (j.contains("image")) r.image = require_string(j, "image");
  if (j.contains("answer_type") && !j["answer_type"].is_null()) {
    const auto s = require_string(j, "answer_type");
    const auto t = parse_answer_type(s);
    if (!t) throw std::invalid_argument("unknown answer_type '" + s + "'");
    r.answer_type = *t;
  } else {
    r.answer_type = infer_answer_type(r.ground_truth);
  }
  if (j.contains("paths")) {
    const auto& ps = j["paths"];
    if (!ps.is_array()) throw std::invalid_argument("field 'paths' must be an array");
    for (const auto& p : ps) {
      if (p.is_string()) {
        r.paths.push_back({p.get<std::string>(), std::nullopt});
        continue;
      }
      if (!p.is_object()) throw std::invalid_argument("path must be a string or object");
      CandidatePath cp{require_string(p, "text"), std::nullopt};
      if (p.contains("correct") && !p["correct"].is_null()) {
        if (!p["correct"].is_boolean()) {
          throw std::invalid_argument("path 'correct' must be a boolean");
        }
        cp.correct = p["correct"].get<bool>();
      }
      r.paths.push_back(std::move(cp));
    }
  }
  if (j.contains("pass_count") && !j["pass_count"].is_null()) {
    if (!j["pass_count"].is_number_integer()) {
      throw std::invalid_argument("field 'pass_count' must be an integer");
    }
    r.pass_count = j["pass_count"].get<int>();
  }
  if (j.contains("bucket") && !j["bucket"].is_null()) {
    const auto s = require_string(j, "bucket");
    r.bucket = parse_bucket(s);
    if (!r.bucket) throw std::invalid_argument("unknown bucket '" + s + "'");
  }
  for (const auto& [k, v] : j.items()) {
    if (!is_known_field(k)) r.extra[k] = v;
  }
  r.validate();
  return r;
}

int pass_at_k(const std::vector<bool>& judgements) {
  if (judgements.empty()) throw std::invalid_argument("pass_at_k: no judgements");
  return static_cast<int>(std::count(judgements.begin(), judgements.end(), true));
}

void BucketThresholds::validate() const {
  if (lo < 0) throw std::invalid_argument("bucket thresholds: lo must be >= 0");
  if (hi <= lo) throw std::invalid_argument("bucket thresholds: hi must exceed lo");
}

Bucket bucket_for(int pass_count, const BucketThresholds& t) {
  if (pass_count >= t.hi) return Bucket::Easy;
  if (pass_count <= t.lo) return Bucket::Hard;
  return Bucket::Medium;
}

BucketResult bucket_samples(std::vector<SampleRecord> records, const BucketThresholds& t) {
  t.validate();
  BucketResult out;
  for (auto& r : records) {
    if (!r.pass_count) {
      out.warnings.push_back("record " + r.id + ": no pass_count, skipped");
      continue;
    }
    r.bucket = bucket_for(*r.pass_count, t);
    out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("largest_remainder: weights must be finite and >= 0");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("largest_remainder: all weights are zero");

  const std::size_t n = weights.size();
  std::vector<std::size_t> seats(n, 0);
  std::vector<double> rem(n, 0.0);
  std::size_t given = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    seats[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(seats[i]);
    given += seats[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; given < total && k < n; ++k) {
    if (weights[order[k]] > 0.0) {
      ++seats[order[k]];
      ++given;
    }
  }
  return seats;
}

RlSelection sample_rl_set(std::span<const SampleRecord> records, std::size_t total_n,
                          std::uint64_t seed, std::array<double, 3> ratio) {
  RlSelection sel;
  std::array<std::vector<std::size_t>, 3> pools;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!seen.insert(r.id).second) {
      throw std::invalid_argument("sample_rl_set: duplicate id " + r.id);
    }
    if (!r.bucket) {
      sel.warnings.push_back("record " + r.id + ": not bucketed, skipped");
      continue;
    }
    pools[bucket_index(*r.bucket)].push_back(i);
  }

  std::array<double, 3> weights{};
  std::size_t available = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!(ratio[b] >= 0.0)) throw std::invalid_argument("sample_rl_set: negative ratio");
    if (ratio[b] > 0.0 && pools[b].empty()) {
      sel.warnings.push_back("bucket " + std::string(to_string(kBuckets[b])) +
                             " is empty; ratio renormalized over the others");
    }
    weights[b] = pools[b].empty() ? 0.0 : ratio[b];
    if (weights[b] > 0.0) available += pools[b].size();
  }
  if (available < total_n) {
    throw std::invalid_argument("sample_rl_set: requested " + std::to_string(total_n) +
                                " records but only " + std::to_string(available) +
                                " are available");
  }

  std::array<bool, 3> fixed{};
  while (total_n > 0) {
    std::array<double, 3> open{};
    std::size_t remaining = total_n;
    for (std::size_t b = 0; b < 3; ++b) {
      if (fixed[b]) {
        remaining -= sel.counts[b];
      } else {
        open[b] = weights[b];
      }
    }
    const auto seats = largest_remainder(open, remaining);
    bool capped = false;
    for (std::size_t b = 0; b < 3; ++b) {
      if (!fixed[b] && seats[b] > pools[b].size()) {
        sel.counts[b] = pools[b].size();
        fixed[b] = true;
        capped = true;
        sel.warnings.push_back("bucket " + std::string(to_string(kBuckets[b])) + " has only " +
                               std::to_string(pools[b].size()) +
                               " records; shortfall re-apportioned");
      }
    }
    if (capped) continue;
    for (std::size_t b = 0; b < 3; ++b) {
      if (!fixed[b]) sel.counts[b] = seats[b];
    }
    break;
  }

  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::size_t> order = pools[b];
    std::mt19937_64 g(rng::mix(seed, b));
    rng::shuffle(order, g);
    std::vector<std::size_t> picked(order.begin(), order.begin() + sel.counts[b]);
    std::vector<std::size_t> rest(order.begin() + sel.counts[b], order.end());
    std::sort(picked.begin(), picked.end());
    std::sort(rest.begin(), rest.end());
    for (std::size_t i : picked) sel.rl_ids.push_back(records[i].id);
    if (kBuckets[b] != Bucket::Medium) {
      for (std::size_t i : rest) sel.cold_start_ids.push_back(records[i].id);
    }
  }
  return sel;
}

void QualityConfig::validate() const {
  reward.validate();
  if (!(max_penalty >= 0.0) || !std::isfinite(max_penalty)) {
    throw std::invalid_argument("quality config: max_penalty must be >= 0");
  }
}

QualityVerdict quality_filter(std::string_view text, const AnswerSpec& spec,
                              const QualityConfig& cfg) {
  QualityVerdict v;
  const FocusTrace trace = parse_response(text);
  v.format = trace.format;
  v.accuracy = relaxed_accuracy(trace.answer, spec);
  v.p_redundancy = redundancy_penalty(trace, cfg.reward);
  if (v.format != FormatClass::FocusCoT) v.reasons.emplace_back("format");
  if (cfg.require_correct && v.accuracy < 1.0) v.reasons.emplace_back("answer");
  if (v.p_redundancy > cfg.max_penalty) v.reasons.emplace_back("redundancy");
  v.kept = v.reasons.empty();
  return v;
}

void ChartIdScores::validate() const {
  for (int s : {s_rich, s_eff, s_clar, s_inter}) {
    if (s < 1 || s > 5) {
      throw std::invalid_argument("chart-id score " + std::to_string(s) +
                                  " is outside [1, 5]");
    }
  }
}

double chart_id(const ChartIdScores& s) {
  s.validate();
  const int tenths = 5 * s.s_rich + 2 * s.s_eff + 2 * s.s_clar + s.s_inter;
  return static_cast<double>(tenths) / 10.0;
}

std::vector<ChartRecord> filter_hid(std::span<const ChartRecord> charts, double threshold) {
  std::vector<ChartRecord> kept;
  for (const auto& c : charts) {
    if (chart_id(c.scores) >= threshold) kept.push_back(c);
  }
  return kept;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Generate:
      return "generate";
    case Stage::Judge:
      return "judge";
    case Stage::Reconstruct:
      return "reconstruct";
    case Stage::Filter:
      return "filter";
  }
  return "generate";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::Generate, Stage::Judge, Stage::Reconstruct, Stage::Filter}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation:
      return "validation";
    case ErrorKind::Provider:
      return "provider";
    case ErrorKind::Io:
      return "io";
  }
  return "validation";
}

void StageConfig::validate() const {
  if (input.empty()) throw std::invalid_argument("stage: input path is empty");
  if (output.empty()) throw std::invalid_argument("stage: output path is empty");
  if (paths_per_sample < 1) throw std::invalid_argument("stage: paths_per_sample must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("stage: temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("stage: max_tokens must be >= 1");
  if (jobs < 1) throw std::invalid_argument("stage: jobs must be >= 1");
  thresholds.validate();
  quality.validate();
}

std::size_t StageReport::count(ErrorKind k) const {
  return static_cast<std::size_t>(
      std::count_if(errors.begin(), errors.end(), [k](const RecordError& e) { return e.kind == k; }));
}

std::filesystem::path errors_path(const std::filesystem::path& output) {
  return output.string() + ".errors.jsonl";
}

std::filesystem::path calls_path(const std::filesystem::path& output) {
  return output.string() + ".calls.jsonl";
}

std::string render_prompt(const std::filesystem::path& dir, std::string_view name,
                          std::span<const std::pair<std::string, std::string>> vars) {
  return fill_template(load_template(dir, name), vars);
}

bool parse_verdict(std::string_view reply) {
  std::string word;
  for (char c : text::trim(reply)) {
    const char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lc < 'a' || lc > 'z') {
      if (word.empty()) continue;
      break;
    }
    word += lc;
  }
  if (word == "correct" || word == "yes" || word == "pass") return true;
  if (word == "incorrect" || word == "no" || word == "fail" || word == "wrong") return false;
  throw ProviderError("unparseable verdict: '" + std::string(reply.substr(0, 80)) + "'");
}

StageReport run_stage(const StageConfig& cfg, Provider* provider) {
  cfg.validate();
  if (stage_needs_provider(cfg) && provider == nullptr) {
    throw std::invalid_argument("stage " + std::string(to_string(cfg.stage)) +
                                " needs a provider");
  }
  StageReport report;
  report.stage = cfg.stage;

  const auto input = jsonl::read_file(cfg.input);
  report.total = input.records.size() + input.errors.size();

  std::error_code ec;
  if (!cfg.resume && std::filesystem::exists(cfg.output, ec) &&
      std::filesystem::file_size(cfg.output, ec) > 0) {
    throw std::invalid_argument("output " + cfg.output.string() +
                                " already exists; resume to continue it");
  }
  const auto done = jsonl::existing_ids(cfg.output);

  std::string tmpl_generate, tmpl_judge, tmpl_reconstruct;
  if (cfg.stage == Stage::Generate) tmpl_generate = load_template(cfg.prompt_dir, "generate");
  if ((cfg.stage == Stage::Judge && cfg.judge_mode == JudgeMode::Llm) ||
      (cfg.stage == Stage::Filter && cfg.llm_filter)) {
    tmpl_judge = load_template(cfg.prompt_dir, "judge");
  }
  if (cfg.stage == Stage::Reconstruct) {
    tmpl_reconstruct = load_template(cfg.prompt_dir, "reconstruct");
  }

  const Json stage_meta{{"stage", std::string(to_string(cfg.stage))}};
  jsonl::Appender out(cfg.output, jsonl::make_header("focusrl.sample_record", stage_meta));
  jsonl::Appender errors(errors_path(cfg.output),
                         jsonl::make_header("focusrl.stage_error", stage_meta));
  std::optional<jsonl::Appender> calls;
  if (provider) {
    calls.emplace(calls_path(cfg.output), jsonl::make_header("focusrl.provider_call", stage_meta));
    provider->set_logger([&calls](const CallLog& c) { calls->append(call_log_json(c)); });
  }
  struct LoggerReset {
    Provider* p;
    ~LoggerReset() {
      if (p) p->set_logger({});
    }
  } reset{provider};

  auto record_error = [&](RecordError e) {
    errors.append(Json{{"id", e.id},
                       {"line", e.line},
                       {"stage", std::string(to_string(cfg.stage))},
                       {"kind", std::string(to_string(e.kind))},
                       {"error", e.message}});
    report.errors.push_back(std::move(e));
  };

  for (const auto& le : input.errors) {
    record_error({"", le.line, ErrorKind::Validation, le.message});
  }

  std::vector<SampleRecord> queue;
  std::vector<std::size_t> queue_lines;
  std::unordered_set<std::string> seen;
  for (std::size_t k = 0; k < input.records.size(); ++k) {
    const auto& j = input.records[k];
    const std::size_t line = input.lines[k];
    std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
    if (!id.empty() && done.contains(id)) {
      ++report.skipped;
      continue;
    }
    if (!id.empty() && !seen.insert(id).second) {
      record_error({id, line, ErrorKind::Validation, "duplicate id in input"});
      continue;
    }
    try {
      queue.push_back(SampleRecord::from_json(j));
      queue_lines.push_back(line);
    } catch (const std::exception& e) {
      record_error({id, line, ErrorKind::Validation, e.what()});
    }
  }

  auto ask = [&](const std::string& prompt, const std::optional<std::string>& image,
                 double temperature, const std::string& request_id) {
    ProviderRequest req;
    req.model = cfg.model;
    req.messages.push_back({"user", prompt, image});
    req.temperature = temperature;
    req.max_tokens = cfg.max_tokens;
    return provider->complete(req, request_id);
  };
  auto image_of = [](const SampleRecord& r) {
    return r.image.empty() ? std::optional<std::string>() : std::optional<std::string>(r.image);
  };

  auto process = [&](SampleRecord rec) -> Outcome {
    Outcome o;
    const std::string stage_name(to_string(cfg.stage));
    switch (cfg.stage) {
      case Stage::Generate: {
        const std::pair<std::string, std::string> vars[] = {{"question", rec.question}};
        const std::string prompt = fill_template(tmpl_generate, vars);
        std::vector<CandidatePath> paths;
        for (int k = 0; k < cfg.paths_per_sample; ++k) {
          const auto resp = ask(prompt, image_of(rec), cfg.temperature,
                                rec.id + "/generate/" + std::to_string(k));
          paths.push_back({resp.text, std::nullopt});
        }
        rec.paths = std::move(paths);
        rec.pass_count.reset();
        rec.bucket.reset();
        break;
      }
      case Stage::Judge: {
        if (rec.paths.empty()) throw std::invalid_argument("no paths to judge");
        const auto spec = rec.answer_spec();
        std::vector<bool> judged;
        for (std::size_t k = 0; k < rec.paths.size(); ++k) {
          auto& p = rec.paths[k];
          const FocusTrace trace = parse_response(p.text);
          bool correct = false;
          if (trace.format != FormatClass::Malformed) {
            if (cfg.judge_mode == JudgeMode::Rule) {
              correct = relaxed_accuracy(trace.answer, spec) == 1.0;
            } else {
              const std::pair<std::string, std::string> vars[] = {
                  {"question", rec.question},
                  {"ground_truth", rec.ground_truth},
                  {"response", p.text}};
              const auto resp = ask(fill_template(tmpl_judge, vars), image_of(rec), 0.0,
                                    rec.id + "/judge/" + std::to_string(k));
              correct = parse_verdict(resp.text);
            }
          }
          p.correct = correct;
          judged.push_back(correct);
        }
        rec.pass_count = pass_at_k(judged);
        rec.bucket = bucket_for(*rec.pass_count, cfg.thresholds);
        break;
      }
      case Stage::Reconstruct: {
        if (rec.paths.empty()) throw std::invalid_argument("no paths to reconstruct");
        std::size_t src = 0;
        bool found = false;
        for (std::size_t k = 0; k < rec.paths.size(); ++k) {
          if (!rec.paths[k].correct) throw std::invalid_argument("paths are not judged");
          if (!found && *rec.paths[k].correct) {
            src = k;
            found = true;
          }
        }
        const std::pair<std::string, std::string> vars[] = {
            {"question", rec.question},
            {"ground_truth", rec.ground_truth},
            {"reasoning", rec.paths[src].text},
            {"verdict", found ? "correct" : "incorrect"}};
        const auto resp = ask(fill_template(tmpl_reconstruct, vars), image_of(rec), 0.0,
                              rec.id + "/reconstruct");
        rec.extra["focus_cot"] = resp.text;
        rec.extra["source_path"] = src;
        break;
      }
      case Stage::Filter: {
        const auto it = rec.extra.find("focus_cot");
        if (it == rec.extra.end() || !it->is_string()) {
          throw std::invalid_argument("record has no focus_cot text");
        }
        const std::string text = it->get<std::string>();
        auto v = quality_filter(text, rec.answer_spec(), cfg.quality);
        std::string verdict = "none";
        if (cfg.llm_filter && v.kept) {
          const std::pair<std::string, std::string> vars[] = {
              {"question", rec.question},
              {"ground_truth", rec.ground_truth},
              {"response", text}};
          try {
            const auto resp = ask(fill_template(tmpl_judge, vars), image_of(rec), 0.0,
                                  rec.id + "/filter");
            verdict = parse_verdict(resp.text) ? "pass" : "fail";
          } catch (const ProviderError& e) {
            verdict = "unjudged";
            o.warnings.push_back("record " + rec.id + ": LLM review failed (" + e.what() +
                                 "), marked unjudged");
          }
          if (verdict == "fail") {
            v.kept = false;
            v.reasons.emplace_back("llm");
          }
        }
        rec.extra["quality"] = Json{{"kept", v.kept},
                                    {"reasons", v.reasons},
                                    {"format", std::string(to_string(v.format))},
                                    {"accuracy", v.accuracy},
                                    {"p_redundancy", v.p_redundancy},
                                    {"verdict", verdict}};
        break;
      }
    }
    o.record = rec.to_json();
    return o;
  };

  for_each_ordered(
      queue.size(), cfg.jobs,
      [&](std::size_t i) -> Outcome {
        const auto& rec = queue[i];
        try {
          return process(rec);
        } catch (const ProviderError& e) {
          return {std::nullopt, RecordError{rec.id, queue_lines[i], ErrorKind::Provider, e.what()}, {}};
        } catch (const jsonl::IoError& e) {
          return {std::nullopt, RecordError{rec.id, queue_lines[i], ErrorKind::Io, e.what()}, {}};
        } catch (const std::exception& e) {
          return {std::nullopt, RecordError{rec.id, queue_lines[i], ErrorKind::Validation, e.what()}, {}};
        }
      },
      [&](std::size_t, Outcome& o) {
        for (auto& w : o.warnings) report.warnings.push_back(std::move(w));
        if (o.record) {
          out.append(*o.record);
          ++report.processed;
        }
        if (o.error) record_error(std::move(*o.error));
      });
  return report;
}

}  // namespace focusrl::pipeline
