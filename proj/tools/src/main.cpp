#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairlens/error.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace fairlens;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitPipeline = 2;

struct Overrides {
  std::optional<std::string> dataset;
  std::optional<std::string> schema;
  std::optional<std::vector<std::string>> protected_names;
  std::optional<std::string> metric;
  std::optional<double> p_thres;
  std::optional<std::size_t> num_interval;
  std::optional<std::uint64_t> seed;
  std::optional<double> train_fraction;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<double> lambda;
  std::optional<double> theta_band;
  std::optional<double> dir_level;
  std::optional<std::vector<std::string>> methods;

  void apply(cli::RunConfig& c) const {
    if (dataset) c.dataset = *dataset;
    if (schema) c.schema = *schema;
    if (protected_names) c.protected_names = *protected_names;
    if (metric) c.metric = parse_metric_kind(*metric);
    if (p_thres) c.p_thres = *p_thres;
    if (num_interval) c.num_interval = *num_interval;
    if (seed) c.seed = *seed;
    if (train_fraction) c.train_fraction = *train_fraction;
    if (epochs) c.epochs = *epochs;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (batch_size) c.batch_size = *batch_size;
    if (hidden) c.hidden = *hidden;
    if (lambda) c.lambda = *lambda;
    if (theta_band) c.theta_band = *theta_band;
    if (dir_level) c.dir_level = *dir_level;
    if (methods) {
      c.methods.clear();
      for (const auto& m : *methods) c.methods.push_back(parse_method(m));
    }
  }
};

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("--dataset", o.dataset, "CSV data file");
  app->add_option("--schema", o.schema, "Schema JSON file");
  app->add_option("--protected", o.protected_names, "Protected attributes (default: all)")->delimiter(',');
  app->add_option("--metric", o.metric, "Fairness metric: spd, gds or cds");
  app->add_option("--p-thres", o.p_thres, "Responsibility proportion threshold (default 0.10)");
  app->add_option("--num-interval", o.num_interval, "Intervention values per variable (default 20)");
  app->add_option("--seed", o.seed, "Seed for the split and training");
  app->add_option("--train-fraction", o.train_fraction, "Training share of the split (default 0.7)");
  app->add_option("--epochs", o.epochs, "Training epochs (default 50)");
  app->add_option("--lr", o.learning_rate, "Learning rate (default 0.001)");
  app->add_option("--batch", o.batch_size, "Mini-batch size (default 32)");
  app->add_option("--hidden", o.hidden, "Hidden layer widths (default 64,32,16,8,4)")->delimiter(',');
  app->add_option("--lambda", o.lambda, "Fairness penalty of the in-processing repair");
  app->add_option("--theta-band", o.theta_band, "Reject-option band on the larger class probability");
  app->add_option("--dir-level", o.dir_level, "Disparate impact remover repair level");
  app->add_option("--methods", o.methods, "Enabled repair methods (RW,DIR,FAIR-REG,RO)")->delimiter(',');
}

std::optional<double> parse_cv(const std::string& text) {
  if (text == "-" || text == "none" || text == "undefined") return std::nullopt;
  return std::stod(text);
}

void write_error(const fs::path& out, const std::string& kind, const std::string& message, int code,
                 nlohmann::json extra = nlohmann::json::object()) {
  std::cerr << "fairlens: " << message << '\n';
  if (out.empty()) return;
  try {
    fs::create_directories(out);
    extra["format_version"] = 1;
    extra["kind"] = kind;
    extra["message"] = message;
    extra["exit_code"] = code;
    cli::write_text(out / "error.json", extra.dump(2));
  } catch (const std::exception&) {
    // Already reported on stderr.
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairlens: causality-based fairness audit and repair for MLP classifiers"};
  app.require_subcommand(1);
  fs::path out;
  Overrides overrides;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted bias");
  std::size_t rows = 10000;
  double bias = 0.3;
  std::uint64_t synth_seed = 0;
  synth->add_option("--rows", rows, "Number of rows")->capture_default_str();
  synth->add_option("--bias", bias, "Planted bias strength in [0, 1]")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the baseline model");
  auto* analyze = app.add_subcommand("analyze", "Causality analysis of attributes and hidden neurons");
  auto* recommend = app.add_subcommand("recommend", "Recommend a repair category and method");
  auto* repair = app.add_subcommand("repair", "Apply the recommended repair");
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on the test split");
  for (auto* sub : {train, analyze, recommend, repair, evaluate}) {
    sub->add_option("--out", out, "Run directory")->required();
    add_run_options(sub, overrides);
  }
  std::optional<double> pf, pn;
  std::optional<std::string> cvf, cvn;
  recommend->add_option("--pf", pf, "Replay: proportion of responsible attributes");
  recommend->add_option("--pn", pn, "Replay: proportion of responsible neurons");
  recommend->add_option("--cvf", cvf, "Replay: CV over responsible attributes ('-' if undefined)");
  recommend->add_option("--cvn", cvn, "Replay: CV over responsible neurons ('-' if undefined)");
  std::optional<std::string> method;
  repair->add_option("--method", method, "Override the recommended method");
  std::optional<fs::path> model_path;
  evaluate->add_option("--model", model_path, "Model file (default: <out>/model.json)");

  auto* report = app.add_subcommand("report", "Merge the phase artifacts into report.json");
  report->add_option("--out", out, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const auto config = [&](bool fresh) {
      cli::RunConfig c;
      if (!fresh && fs::exists(out / "config.json")) c = cli::load_run_config(out);
      c.out = out;
      overrides.apply(c);
      return c;
    };

    if (synth->parsed()) {
      cli::cmd_synth(rows, bias, synth_seed, out);
      std::cout << "wrote " << (out / "synth.csv").string() << " and " << (out / "synth.schema.json").string()
                << '\n';
    } else if (train->parsed()) {
      const auto r = cli::cmd_train(config(true));
      std::printf("baseline %s = %.4f, accuracy = %.4f\n", to_string(r.metric.kind).c_str(), r.value, r.accuracy);
    } else if (analyze->parsed()) {
      const auto s = cli::cmd_analyze(config(false));
      std::printf("P_f = %.4f, P_n = %.4f\n", s.p_f, s.p_n);
    } else if (recommend->parsed()) {
      std::optional<ResponsibilityStats> replay;
      if (pf || pn || cvf || cvn) {
        if (!pf || !pn || !cvf || !cvn) throw ConfigError("replay mode needs --pf, --pn, --cvf and --cvn");
        replay.emplace();
        replay->p_f = *pf;
        replay->p_n = *pn;
        replay->cv_f = parse_cv(*cvf);
        replay->cv_n = parse_cv(*cvn);
      }
      const auto r = cli::cmd_recommend(config(false), replay);
      std::cout << to_string(r.category) << " (" << to_string(r.method) << ")\n" << r.rationale << '\n';
    } else if (repair->parsed()) {
      std::optional<Method> m;
      if (method) m = parse_method(*method);
      const auto o = cli::cmd_repair(config(false), m);
      std::printf("%s: %s %.4f -> %.4f, accuracy %.4f -> %.4f\n", to_string(o.method).c_str(),
                  to_string(o.metric.kind).c_str(), o.fairness_before, o.fairness_after, o.accuracy_before,
                  o.accuracy_after);
    } else if (evaluate->parsed()) {
      const auto r = cli::cmd_evaluate(config(false), model_path);
      std::printf("%s = %.4f, accuracy = %.4f\n", to_string(r.metric.kind).c_str(), r.value, r.accuracy);
    } else if (report->parsed()) {
      cli::cmd_report(out);
      std::cout << "wrote " << (out / "report.json").string() << '\n';
    }
    return 0;
  } catch (const ValidationError& e) {
    nlohmann::json extra;
    if (e.row() != ValidationError::kNoRow) extra["row"] = e.row();
    write_error(out, "validation", e.what(), kExitValidation, extra);
    return kExitValidation;
  } catch (const SchemaError& e) {
    write_error(out, "schema", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const ConfigError& e) {
    write_error(out, "config", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const FormatError& e) {
    write_error(out, "format", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const TrainingError& e) {
    write_error(out, "training", e.what(), kExitPipeline, {{"epoch", e.epoch()}});
    return kExitPipeline;
  } catch (const std::exception& e) {
    write_error(out, "pipeline", e.what(), kExitPipeline);
    return kExitPipeline;
  }
}
