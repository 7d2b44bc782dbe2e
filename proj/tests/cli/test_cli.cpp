#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "test_util.hpp"

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(FOCUSRL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::vector<nlohmann::json> records(const std::filesystem::path& p) {
  std::vector<nlohmann::json> out;
  std::istringstream in(testutil::slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (!j.contains("header")) out.push_back(std::move(j));
  }
  return out;
}

nlohmann::json header(const std::filesystem::path& p) {
  std::istringstream in(testutil::slurp(p));
  std::string line;
  std::getline(in, line);
  return nlohmann::json::parse(line).at("header");
}

const char* kGroup =
    R"({"id":"g1","question":"Value of A?","ground_truth":"5","answer_type":"numeric","responses":[)"
    R"("<think><focus><ocr>A: 5</ocr></focus> so 5</think><answer>5</answer>",)"
    R"("<think>guess</think><answer>7</answer>"]})";

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("no-such-command").code == 2);
  CHECK(cli("score").code == 2);
  CHECK(cli("--version").code == 0);
}

TEST_CASE("score: advantages, summary and exit codes") {
  testutil::TempDir dir;
  testutil::write_text(dir / "in.jsonl", std::string(kGroup) + "\n");
  const auto r = cli("score -i " + q(dir / "in.jsonl") + " -o " + q(dir / "out.jsonl"));
  INFO(r.output);
  CHECK(r.code == 0);
  const auto recs = records(dir / "out.jsonl");
  REQUIRE(recs.size() == 1);
  const auto& adv = recs[0]["advantages"];
  REQUIRE(adv.size() == 2);
  CHECK(adv[0].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(adv[1].get<double>() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(recs[0]["scores"][0]["total"].get<double>() == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(recs[0]["scores"][1]["total"].get<double>() == doctest::Approx(0.1667).epsilon(1e-12));
  CHECK(header(dir / "out.jsonl")["schema"] == "focusrl.scored_rollout");

  testutil::write_text(dir / "empty.jsonl", "");
  const auto e = cli("score -i " + q(dir / "empty.jsonl") + " -o " + q(dir / "o2.jsonl"));
  CHECK(e.code == 2);
  CHECK(e.output.find("no records") != std::string::npos);

  testutil::write_text(dir / "mixed.jsonl",
                       std::string(kGroup) + "\n" +
                           R"({"id":"g2","question":"q","ground_truth":"5","answer_type":"fuzzy","responses":["a","b"]})" +
                           "\n");
  const auto m = cli("score -i " + q(dir / "mixed.jsonl") + " -o " + q(dir / "o3.jsonl"));
  CHECK(m.code == 5);
  CHECK(m.output.find("answer_type") != std::string::npos);
  CHECK(records(dir / "o3.jsonl").size() == 1);

  testutil::write_text(dir / "bad.jsonl", "{oops\n");
  CHECK(cli("score -i " + q(dir / "bad.jsonl") + " -o " + q(dir / "o4.jsonl")).code == 2);
  CHECK(cli("score -i " + q(dir / "missing.jsonl") + " -o " + q(dir / "o5.jsonl")).code == 3);
  CHECK(cli("score -i " + q(dir / "in.jsonl") + " -o " + q(dir / "o6.jsonl") + " --alpha -1").code == 2);
}

TEST_CASE("gradcheck: pass per seed, negative control fails") {
  const auto r = cli("gradcheck --seed 1 --seed 2 --seed 3");
  INFO(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("seed 1: PASS") != std::string::npos);
  CHECK(r.output.find("seed 2: PASS") != std::string::npos);
  CHECK(r.output.find("seed 3: PASS") != std::string::npos);
  const auto bad = cli("gradcheck --seed 1 --inject-sign-flip");
  CHECK(bad.code == 1);
  CHECK(bad.output.find("FAIL") != std::string::npos);
}

TEST_CASE("simulate: reproducible metrics and ablation header") {
  testutil::TempDir dir;
  const std::string base = "simulate --iterations 12 --seed 3 -o ";
  REQUIRE(cli(base + q(dir / "a.jsonl")).code == 0);
  REQUIRE(cli(base + q(dir / "b.jsonl")).code == 0);
  CHECK(testutil::slurp(dir / "a.jsonl") == testutil::slurp(dir / "b.jsonl"));
  CHECK(records(dir / "a.jsonl").size() == 12);

  REQUIRE(cli(base + q(dir / "off.jsonl") + " --no-efficiency --fixed-kl").code == 0);
  const auto h = header(dir / "off.jsonl");
  CHECK(h["efficiency_reward"] == false);
  CHECK(h["adaptive_kl"] == false);
  CHECK(header(dir / "a.jsonl")["efficiency_reward"] == true);

  const auto rep = cli("report " + q(dir / "a.jsonl") + " " + q(dir / "off.jsonl") + " --window 5");
  CHECK(rep.code == 0);
  CHECK(rep.output.find("efficiency") != std::string::npos);

  const auto div = cli("simulate --iterations 50 --lr 1e6 -o " + q(dir / "div.jsonl"));
  CHECK(div.code == 1);
  CHECK(div.output.find("diverge") != std::string::npos);
  CHECK(cli("report " + q(dir / "nope.jsonl")).code == 3);
}

TEST_CASE("chart-id") {
  const auto r = cli("chart-id --scores 5,5,5,5");
  CHECK(r.code == 0);
  CHECK(r.output.find('5') != std::string::npos);
  CHECK(cli("chart-id --scores 4,3,4,3").output.find("3.7") != std::string::npos);
  CHECK(cli("chart-id --scores 6,1,1,1").code == 2);

  testutil::TempDir dir;
  testutil::write_text(dir / "c.jsonl",
                       R"({"id":"top","s_rich":5,"s_eff":5,"s_clar":5,"s_inter":5})"
                       "\n"
                       R"({"id":"low","s_rich":1,"s_eff":1,"s_clar":1,"s_inter":1})"
                       "\n");
  REQUIRE(cli("chart-id -i " + q(dir / "c.jsonl") + " -o " + q(dir / "hid.jsonl")).code == 0);
  const auto kept = records(dir / "hid.jsonl");
  REQUIRE(kept.size() == 1);
  CHECK(kept[0]["id"] == "top");
  CHECK(kept[0]["chart_id"].get<double>() == 5.0);
}

TEST_CASE("pipeline: stub run, resume without duplicates, select") {
  testutil::TempDir dir;
  std::string input;
  for (int k = 0; k < 20; ++k) {
    input += R"({"id":"s)" + std::to_string(k) + R"(","question":"q)" + std::to_string(k) +
             R"(","ground_truth":"5"})" + "\n";
  }
  testutil::write_text(dir / "in.jsonl", input);
  testutil::write_text(dir / "stub.json",
                       R"({"default":"<think>so 5</think><answer>5</answer>","fail_ids":["s4/","s9/"]})");
  const std::string gen = "pipeline run --stage generate --provider stub --stub-config " +
                          q(dir / "stub.json") + " --paths 2 -i " + q(dir / "in.jsonl") + " -o " +
                          q(dir / "gen.jsonl");
  const auto first = cli(gen);
  INFO(first.output);
  CHECK(first.code == 4);
  CHECK(records(dir / "gen.jsonl").size() == 18);
  CHECK(cli(gen).code == 2);  // output exists, no --resume

  testutil::write_text(dir / "stub.json", R"({"default":"<think>so 5</think><answer>5</answer>"})");
  CHECK(cli(gen + " --resume").code == 0);
  CHECK(cli(gen + " --resume").code == 0);
  const auto ids = records(dir / "gen.jsonl");
  std::set<std::string> unique;
  for (const auto& r : ids) unique.insert(r["id"].get<std::string>());
  CHECK(ids.size() == 20);
  CHECK(unique.size() == 20);

  REQUIRE(cli("pipeline run --stage judge -i " + q(dir / "gen.jsonl") + " -o " +
              q(dir / "judged.jsonl") + " --hi 2 --lo 0")
              .code == 0);
  const auto sel = cli("pipeline select -i " + q(dir / "judged.jsonl") + " --rl-out " +
                       q(dir / "rl.jsonl") + " --cold-out " + q(dir / "cold.jsonl") +
                       " --total 10 --seed 1 --hi 2 --lo 0");
  INFO(sel.output);
  CHECK(sel.code == 0);
  CHECK(records(dir / "rl.jsonl").size() == 10);
  CHECK(records(dir / "cold.jsonl").size() == 10);
}
