#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "fairlens/error.hpp"
#include "pipeline.hpp"
#include "recorded_audits.hpp"

namespace fairlens::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fairlens_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config(const fs::path& out) {
  RunConfig c;
  c.dataset = (out / "synth.csv").string();
  c.schema = (out / "synth.schema.json").string();
  c.metric = MetricKind::kSpd;
  c.num_interval = 3;
  c.seed = 5;
  c.epochs = 12;
  c.hidden = {16, 8, 4};
  c.out = out;
  return c;
}

int run_binary(const std::string& args) {
  const std::string command = std::string(FAIRLENS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Pipeline, LibraryPhasesProduceAConsistentReport) {
  const fs::path out = fresh_dir("lib");
  cmd_synth(2000, 0.3, 5, out);
  const RunConfig c = small_config(out);
  const ScoreReport base = cmd_train(c);
  EXPECT_GE(base.accuracy, 0.0);
  EXPECT_LE(base.accuracy, 1.0);
  EXPECT_TRUE(fs::exists(out / "model.json"));

  const ResponsibilityStats stats = cmd_analyze(c);
  EXPECT_EQ(stats.neuron_count, 28u);
  const std::string table = read_text(out / "aie_table.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2 + 6 + 28);  // version line and header

  const Recommendation rec = cmd_recommend(c);
  const RepairOutcome outcome = cmd_repair(c);
  EXPECT_EQ(outcome.method, rec.method);
  EXPECT_GT(outcome.improvement(), 0.0);
  cmd_evaluate(c);

  const json report = json::parse(cmd_report(out));
  EXPECT_EQ(report.at("format_version"), kReportFormatVersion);
  const json& o = report.at("outcomes").at(0);
  EXPECT_DOUBLE_EQ(o.at("improvement").get<double>(),
                   o.at("fairness_before").get<double>() - o.at("fairness_after").get<double>());
  EXPECT_DOUBLE_EQ(o.at("improvement").get<double>(), outcome.improvement());
  for (const auto& [phase, seconds] : report.at("timings").items()) EXPECT_GT(seconds.get<double>(), 0.0) << phase;
  EXPECT_EQ(report.at("aie_table").size(), 6u + 28u);
}

TEST(Pipeline, ReportListsMissingArtifacts) {
  const fs::path out = fresh_dir("missing");
  cmd_synth(300, 0.3, 1, out);
  RunConfig c = small_config(out);
  c.epochs = 2;
  cmd_train(c);
  try {
    cmd_report(out);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("stats.json"), std::string::npos) << what;
    EXPECT_NE(what.find("recommendation.json"), std::string::npos) << what;
  }
}

TEST(Pipeline, AnalyzeRejectsForeignModel) {
  const fs::path out = fresh_dir("fingerprint");
  cmd_synth(300, 0.3, 1, out);
  RunConfig c = small_config(out);
  c.epochs = 2;
  cmd_train(c);
  json schema = json::parse(read_text(out / "synth.schema.json"));
  schema["label"]["values"] = {"no", "yes"};
  write_text(out / "synth.schema.json", schema.dump(2));
  // Labels no longer parse, or the fingerprint differs; both are refusals.
  EXPECT_THROW(cmd_analyze(c), Error);
}

TEST(Replay, RecordedAuditsGiveRecordedCategories) {
  const fs::path out = fresh_dir("replay");
  RunConfig c;
  c.out = out;
  for (const auto& row : testing::recorded_audits()) {
    c.metric = row.metric;
    const Recommendation r = cmd_recommend(c, testing::stats_of(row));
    EXPECT_EQ(r.category, row.expected) << row.name;
  }
}

TEST(Binary, EndToEndAndByteIdenticalReruns) {
  const fs::path a = fresh_dir("bin_a");
  const fs::path b = fresh_dir("bin_b");
  for (const fs::path& out : {a, b}) {
    ASSERT_EQ(run_binary("synth --rows 1500 --bias 0.3 --seed 2 --out " + out.string()), 0);
    const std::string data = " --dataset " + (out / "synth.csv").string() + " --schema " +
                             (out / "synth.schema.json").string() + " --out " + out.string();
    ASSERT_EQ(run_binary("train" + data + " --seed 3 --epochs 8 --hidden 16,8 --metric spd"), 0);
    ASSERT_EQ(run_binary("analyze --out " + out.string() + " --num-interval 3"), 0);
    ASSERT_EQ(run_binary("recommend --out " + out.string()), 0);
    ASSERT_EQ(run_binary("repair --out " + out.string()), 0);
    ASSERT_EQ(run_binary("evaluate --out " + out.string()), 0);
    ASSERT_EQ(run_binary("report --out " + out.string()), 0);
  }
  for (const char* file : {"synth.csv", "model.json", "baseline.json", "aie_table.csv", "stats.json",
                           "recommendation.json", "outcome.json", "evaluation.json"}) {
    EXPECT_EQ(read_text(a / file), read_text(b / file)) << file;
  }
  const json report = json::parse(read_text(a / "report.json"));
  EXPECT_TRUE(report.contains("recommendation"));
}

TEST(Binary, ReplayAndExitCodes) {
  const fs::path out = fresh_dir("bin_codes");
  ASSERT_EQ(run_binary("recommend --out " + out.string() + " --pf 0.25 --pn 0.266 --cvf 0.041 --cvn 0.152"), 0);
  EXPECT_EQ(json::parse(read_text(out / "recommendation.json")).at("category"), "in-processing");
  ASSERT_EQ(run_binary("recommend --out " + out.string() + " --metric cds --pf 0.4 --pn 0.508 --cvf 0.076 --cvn 0.047"),
            0);
  EXPECT_EQ(json::parse(read_text(out / "recommendation.json")).at("category"), "pre-processing");
  ASSERT_EQ(run_binary("recommend --out " + out.string() + " --pf 0 --pn 0.153 --cvf - --cvn 0.026"), 0);
  EXPECT_EQ(json::parse(read_text(out / "recommendation.json")).at("category"), "in-processing");

  // Validation-style failures exit 1 and leave error.json behind.
  EXPECT_EQ(run_binary("train --dataset /nonexistent.csv --schema /nonexistent.json --out " + out.string()), 1);
  EXPECT_TRUE(fs::exists(out / "error.json"));
  EXPECT_EQ(run_binary("recommend --out " + out.string() + " --pf 0.3 --pn 0.3 --cvf - --cvn -"), 1);
  EXPECT_EQ(run_binary("frobnicate"), 1);

  cmd_synth(200, 0.3, 1, out);
  const std::string data =
      " --dataset " + (out / "synth.csv").string() + " --schema " + (out / "synth.schema.json").string();
  EXPECT_EQ(run_binary("train" + data + " --out " + out.string() + " --metric spd --protected x1"), 1);
  // Pipeline failure: training diverges.
  EXPECT_EQ(run_binary("train" + data + " --out " + out.string() + " --epochs 2 --lr 1e300 --hidden 4"), 2);
}

}  // namespace
}  // namespace fairlens::cli
