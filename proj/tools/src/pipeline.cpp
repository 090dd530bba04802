#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fairlens/error.hpp"

namespace fairlens::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kModelFile = "model.json";
constexpr const char* kBaselineFile = "baseline.json";
constexpr const char* kAieTableFile = "aie_table.csv";
constexpr const char* kStatsFile = "stats.json";
constexpr const char* kRecommendationFile = "recommendation.json";
constexpr const char* kOutcomeFile = "outcome.json";
constexpr const char* kRepairedModelFile = "repaired_model.json";
constexpr const char* kOverlayFile = "overlay.json";
constexpr const char* kEvaluationFile = "evaluation.json";
constexpr const char* kTimingsFile = "timings.json";
constexpr const char* kReportFile = "report.json";

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Phase files must name the format they were written with.
json parse_versioned(const fs::path& path, int version) {
  json j = parse_json(path);
  if (!j.is_object() || !j.contains("format_version") || j["format_version"] != version) {
    throw FormatError(path.string() + " has a missing or unsupported format_version");
  }
  return j;
}

std::vector<std::string> names_of(const Schema& schema, const ProtectedSet& protected_set) {
  std::vector<std::string> names;
  for (std::size_t index : protected_set) names.push_back(schema.attribute(index).name);
  return names;
}

ModelFile load_checked_model(const fs::path& path, const Schema& schema) {
  ModelFile file = load_model(path);
  if (file.schema_fingerprint != schema.fingerprint()) {
    throw ConfigError(path.string() + " was trained against a different schema (fingerprint " +
                      file.schema_fingerprint + ", schema has " + schema.fingerprint() + ")");
  }
  if (file.model.input_width() != schema.width()) {
    throw ConfigError(path.string() + " expects " + std::to_string(file.model.input_width()) +
                      " inputs but the schema has " + std::to_string(schema.width()) + " attributes");
  }
  return file;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

json aie_table_json(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::string> header;
  json rows = json::array();
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_csv_line(line);
    if (header.empty()) {
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    json row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      const std::string& key = header[i];
      const std::string& v = fields[i];
      if (key == "kind" || key == "name") {
        row[key] = v;
      } else if (v.empty()) {
        row[key] = nullptr;
      } else if (key == "layer" || key == "index" || key == "responsible") {
        row[key] = std::stoll(v);
      } else {
        row[key] = std::stod(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.epochs = epochs;
  c.learning_rate = learning_rate;
  c.batch_size = batch_size;
  c.seed = seed;
  c.hidden = hidden;
  return c;
}

RepairOptions RunConfig::repair_options() const {
  RepairOptions o;
  o.fairness_penalty = lambda;
  o.theta_band = theta_band;
  o.dir_level = dir_level;
  return o;
}

MethodOptions RunConfig::method_options() const {
  MethodOptions o;
  o.enabled = methods;
  return o;
}

std::string run_config_to_json(const RunConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(to_string(m));
  json j{{"format_version", kReportFormatVersion},
         {"dataset", c.dataset},
         {"schema", c.schema},
         {"protected", c.protected_names},
         {"metric", to_string(c.metric)},
         {"p_thres", c.p_thres},
         {"num_interval", c.num_interval},
         {"seed", c.seed},
         {"train_fraction", c.train_fraction},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"hidden", c.hidden},
         {"lambda", c.lambda},
         {"theta_band", c.theta_band},
         {"dir_level", c.dir_level},
         {"methods", methods}};
  return j.dump(2);
}

RunConfig run_config_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format_version") != kReportFormatVersion) throw FormatError("unsupported config format_version");
    RunConfig c;
    c.dataset = j.at("dataset").get<std::string>();
    c.schema = j.at("schema").get<std::string>();
    c.protected_names = j.at("protected").get<std::vector<std::string>>();
    c.metric = parse_metric_kind(j.at("metric").get<std::string>());
    c.p_thres = j.at("p_thres").get<double>();
    c.num_interval = j.at("num_interval").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.lambda = j.at("lambda").get<double>();
    c.theta_band = j.at("theta_band").get<double>();
    c.dir_level = j.at("dir_level").get<double>();
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed config.json: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& out) {
  const fs::path path = out / kConfigFile;
  if (!fs::exists(path)) throw ConfigError(path.string() + " not found; run 'fairlens train' first");
  RunConfig c = run_config_from_json(read_text(path));
  c.out = out;
  return c;
}

Workspace open_workspace(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("no dataset given");
  if (config.schema.empty()) throw ConfigError("no schema given");
  if (!fs::exists(config.dataset)) throw ConfigError("dataset " + config.dataset + " does not exist");
  if (!fs::exists(config.schema)) throw ConfigError("schema " + config.schema + " does not exist");
  auto schema = std::make_shared<const Schema>(load_schema(config.schema));
  FairnessMetric metric{config.metric, schema->resolve_protected(config.protected_names)};
  metric.validate(*schema);
  Dataset data = load_csv(config.dataset, schema);
  auto [train, test] = split(data, config.train_fraction, config.seed);
  return {std::move(schema), std::move(train), std::move(test), std::move(metric)};
}

// ---------------------------------------------------------------------------

void cmd_synth(std::size_t rows, double bias, std::uint64_t seed, const fs::path& out) {
  fs::create_directories(out);
  const Dataset data = synth_generate(rows, bias, seed);
  write_csv(out / "synth.csv", data);
  write_text(out / "synth.schema.json", schema_to_json(data.schema()));
}

ScoreReport cmd_train(const RunConfig& config) {
  const Stopwatch clock;
  fs::create_directories(config.out);
  const Workspace ws = open_workspace(config);
  const TrainConfig tc = config.train_config();
  const Encoding encoding = Encoding::fit(ws.train);
  Mlp model = train(encode(ws.train, encoding), tc);

  ModelFile file{std::move(model), ws.schema->fingerprint(), encoding, tc, config.train_fraction, config.seed};
  save_model(file, config.out / kModelFile);
  write_text(config.out / kConfigFile, run_config_to_json(config));
  const ScoreReport report = evaluate(file.model, EvalSet(ws.test, encoding), ws.metric);
  write_text(config.out / kBaselineFile, score_report_to_json(report, *ws.schema));
  record_timing(config.out, "train", clock.seconds());
  return report;
}

ResponsibilityStats cmd_analyze(const RunConfig& config) {
  const Stopwatch clock;
  const Workspace ws = open_workspace(config);
  const ModelFile file = load_checked_model(config.out / kModelFile, *ws.schema);
  const EvalSet set(ws.train, file.encoding);
  const Analysis analysis = analyze_all(file.model, set, ws.metric, config.num_interval);
  write_text(config.out / kAieTableFile, aie_table_csv(analysis.records));
  write_text(config.out / kStatsFile, stats_to_json(analysis.stats));
  write_text(config.out / kConfigFile, run_config_to_json(config));
  record_timing(config.out, "analyze", clock.seconds());
  return analysis.stats;
}

Recommendation cmd_recommend(const RunConfig& config, const std::optional<ResponsibilityStats>& replay) {
  const Stopwatch clock;
  ResponsibilityStats stats;
  if (replay) {
    stats = *replay;
  } else {
    const fs::path path = config.out / kStatsFile;
    if (!fs::exists(path)) throw ConfigError(path.string() + " not found; run 'fairlens analyze' first");
    stats = stats_from_json(read_text(path));
  }
  const MethodOptions options = config.method_options();
  const Category category = select_category(stats, config.p_thres);
  std::size_t candidates = 0;
  for (Method m : options.enabled) candidates += category_of(m) == category;
  CandidateEvaluator evaluator;
  if (candidates > 1) {
    const Workspace ws = open_workspace(config);
    RepairJob job{config.train_config(), ws.train, ws.test, ws.metric, std::nullopt};
    evaluator = validation_evaluator(job, config.repair_options(), 0.8, config.seed);
  }
  fs::create_directories(config.out);
  Recommendation r = recommend_from_stats(stats, config.metric, config.p_thres, options, evaluator);
  write_text(config.out / kRecommendationFile, recommendation_to_json(r));
  record_timing(config.out, "recommend", clock.seconds());
  return r;
}

RepairOutcome cmd_repair(const RunConfig& config, std::optional<Method> method) {
  const Stopwatch clock;
  if (!method) {
    const fs::path path = config.out / kRecommendationFile;
    if (!fs::exists(path)) throw ConfigError(path.string() + " not found; run 'fairlens recommend' first");
    method = recommendation_from_json(read_text(path)).method;
  }
  const Workspace ws = open_workspace(config);
  const ModelFile base = load_checked_model(config.out / kModelFile, *ws.schema);
  RepairJob job{config.train_config(), ws.train, ws.test, ws.metric, base.model};
  const RepairResult result = apply_method(job, *method, config.repair_options());

  fs::remove(config.out / kRepairedModelFile);
  fs::remove(config.out / kOverlayFile);
  if (result.model) {
    TrainConfig tc = config.train_config();
    tc.use_sample_weights = *method == Method::kReweighing;
    if (*method == Method::kFairnessRegularizer) tc.fairness_penalty = config.lambda;
    const ModelFile repaired{*result.model, base.schema_fingerprint, base.encoding, tc, base.train_fraction,
                             base.split_seed};
    save_model(repaired, config.out / kRepairedModelFile);
  } else {
    write_text(config.out / kOverlayFile, overlay_to_json(result.overlay));
  }
  write_text(config.out / kOutcomeFile, outcome_to_json(result.outcome, *ws.schema));
  record_timing(config.out, "repair", clock.seconds());
  return result.outcome;
}

ScoreReport cmd_evaluate(const RunConfig& config, const std::optional<fs::path>& model_path) {
  const Stopwatch clock;
  const Workspace ws = open_workspace(config);
  const ModelFile file = load_checked_model(model_path.value_or(config.out / kModelFile), *ws.schema);
  const ScoreReport report = evaluate(file.model, EvalSet(ws.test, file.encoding), ws.metric);
  fs::create_directories(config.out);
  write_text(config.out / kEvaluationFile, score_report_to_json(report, *ws.schema));
  record_timing(config.out, "evaluate", clock.seconds());
  return report;
}

std::string cmd_report(const fs::path& out) {
  std::vector<std::string> missing;
  for (const char* name : {kConfigFile, kBaselineFile, kAieTableFile, kStatsFile, kRecommendationFile,
                           kOutcomeFile, kTimingsFile}) {
    if (!fs::exists(out / name)) missing.emplace_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw FormatError("cannot assemble the report; missing " + list + " in " + out.string());
  }

  json outcome = parse_versioned(out / kOutcomeFile, 1);
  const double improvement = outcome.at("fairness_before").get<double>() - outcome.at("fairness_after").get<double>();
  const double delta = outcome.at("accuracy_after").get<double>() - outcome.at("accuracy_before").get<double>();
  if (std::abs(improvement - outcome.at("improvement").get<double>()) > 1e-12 ||
      std::abs(delta - outcome.at("accuracy_delta").get<double>()) > 1e-12) {
    throw FormatError("outcome.json deltas do not match its scores");
  }
  json timings = parse_versioned(out / kTimingsFile, 1);
  for (const auto& [phase, seconds] : timings.at("phases").items()) {
    if (!(seconds.get<double>() > 0.0)) throw FormatError("timing of phase '" + phase + "' is not positive");
  }

  json report{{"format_version", kReportFormatVersion},
              {"config", parse_versioned(out / kConfigFile, kReportFormatVersion)},
              {"baseline", parse_versioned(out / kBaselineFile, 1)},
              {"aie_table", aie_table_json(out / kAieTableFile)},
              {"stats", parse_versioned(out / kStatsFile, kAnalysisFormatVersion)},
              {"recommendation", parse_versioned(out / kRecommendationFile, kRecommendationFormatVersion)},
              {"outcomes", json::array({std::move(outcome)})},
              {"timings", std::move(timings.at("phases"))}};
  if (fs::exists(out / kEvaluationFile)) report["evaluation"] = parse_versioned(out / kEvaluationFile, 1);
  const std::string text = report.dump(2);
  write_text(out / kReportFile, text);
  return text;
}

// ---------------------------------------------------------------------------

void record_timing(const fs::path& out, const std::string& phase, double seconds) {
  const fs::path path = out / kTimingsFile;
  json j{{"format_version", 1}, {"phases", json::object()}};
  if (fs::exists(path)) j = parse_versioned(path, 1);
  // A phase that finished inside the clock resolution still took time.
  j["phases"][phase] = std::max(seconds, 1e-9);
  write_text(path, j.dump(2));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

}  // namespace fairlens::cli
