#include "fairlens/repair.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "fairlens/error.hpp"

namespace fairlens {

std::string to_string(Category category) {
  switch (category) {
    case Category::kPre: return "pre-processing";
    case Category::kIn: return "in-processing";
    case Category::kPost: return "post-processing";
  }
  return "?";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kReweighing: return "RW";
    case Method::kDisparateImpactRemover: return "DIR";
    case Method::kFairnessRegularizer: return "FAIR-REG";
    case Method::kRejectOption: return "RO";
  }
  return "?";
}

Category parse_category(std::string_view text) {
  if (text == "pre" || text == "pre-processing") return Category::kPre;
  if (text == "in" || text == "in-processing") return Category::kIn;
  if (text == "post" || text == "post-processing") return Category::kPost;
  throw ConfigError("unknown repair category '" + std::string(text) + "'");
}

Method parse_method(std::string_view text) {
  if (text == "RW" || text == "rw") return Method::kReweighing;
  if (text == "DIR" || text == "dir") return Method::kDisparateImpactRemover;
  if (text == "FAIR-REG" || text == "fair-reg" || text == "reg") return Method::kFairnessRegularizer;
  if (text == "RO" || text == "ro") return Method::kRejectOption;
  throw ConfigError("unknown repair method '" + std::string(text) + "'");
}

Category category_of(Method method) {
  switch (method) {
    case Method::kReweighing:
    case Method::kDisparateImpactRemover: return Category::kPre;
    case Method::kFairnessRegularizer: return Category::kIn;
    case Method::kRejectOption: return Category::kPost;
  }
  return Category::kPre;
}

CriticalRegion::CriticalRegion(double band) : theta_band(band) {
  if (!(band > 0.5 && band <= 1.0)) throw ConfigError("theta_band must lie in (0.5, 1]");
}

// ---------------------------------------------------------------------------
// Pre-processing primitives

std::vector<double> reweigh_groups(std::span<const int> labels, std::span<const std::size_t> group_of,
                                   std::size_t groups) {
  const std::size_t n = labels.size();
  std::vector<double> group_count(groups, 0.0);
  std::array<double, 2> label_count{0.0, 0.0};
  std::vector<std::array<double, 2>> cell(groups, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = group_of[i];
    if (g >= groups) throw ConfigError("row " + std::to_string(i) + " has no group");
    const auto c = static_cast<std::size_t>(labels[i]);
    group_count[g] += 1.0;
    label_count[c] += 1.0;
    cell[g][c] += 1.0;
  }
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < 2; ++c) {
      if (cell[g][c] == 0.0) {
        throw ConfigError("reweighing: group #" + std::to_string(g) + " has no rows with label " +
                          std::to_string(c));
      }
    }
  }
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = group_of[i];
    const auto c = static_cast<std::size_t>(labels[i]);
    weights[i] = (group_count[g] * label_count[c]) / (static_cast<double>(n) * cell[g][c]);
  }
  return weights;
}

std::vector<double> reweigh(const Dataset& data, std::size_t attribute) {
  const auto mask = privileged_mask(data, attribute);
  std::vector<std::size_t> group_of(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) group_of[i] = mask[i] ? 1 : 0;
  return reweigh_groups(data.labels(), group_of, 2);
}

std::vector<double> reweigh(const Dataset& data, const ProtectedSet& protected_set) {
  if (protected_set.size() == 1) return reweigh(data, protected_set.front());
  const auto all = valuations(data.schema(), protected_set);
  return reweigh_groups(data.labels(), valuation_index(data, all), all.size());
}

namespace {

// Within-group quantile position of every member, ties sharing their
// average rank.
std::vector<double> quantile_positions(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> u(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && values[order[end]] == values[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + end - 1);
    for (std::size_t k = start; k < end; ++k) u[order[k]] = (rank + 0.5) / static_cast<double>(n);
    start = end;
  }
  return u;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Dataset disparate_impact_remove(const Dataset& data, const ProtectedSet& protected_set, double repair_level) {
  if (!(repair_level >= 0.0 && repair_level <= 1.0)) throw ConfigError("repair_level must lie in [0, 1]");
  const Schema& schema = data.schema();
  const auto all = valuations(schema, protected_set);
  const auto group_of = valuation_index(data, all);

  std::vector<double> values(data.values().begin(), data.values().end());
  if (repair_level == 0.0) return data.with_values(std::move(values));
  const std::size_t w = data.width();
  for (std::size_t c = 0; c < w; ++c) {
    const Attribute& a = schema.attribute(c);
    if (a.is_categorical() || schema.is_protected(c)) continue;

    std::vector<std::vector<std::size_t>> members(all.size());
    for (std::size_t r = 0; r < data.size(); ++r) members[group_of[r]].push_back(r);
    std::vector<std::vector<double>> sorted;
    std::vector<std::vector<double>> positions(all.size());
    for (std::size_t g = 0; g < all.size(); ++g) {
      if (members[g].empty()) continue;
      std::vector<double> v;
      for (std::size_t r : members[g]) v.push_back(data.value(r, c));
      positions[g] = quantile_positions(v);
      std::sort(v.begin(), v.end());
      sorted.push_back(std::move(v));
    }
    const auto target = [&](double u) {
      std::vector<double> q;
      for (const auto& s : sorted) {
        const auto k = std::min(s.size() - 1, static_cast<std::size_t>(u * static_cast<double>(s.size())));
        q.push_back(s[k]);
      }
      return median(std::move(q));
    };
    for (std::size_t g = 0; g < all.size(); ++g) {
      for (std::size_t k = 0; k < members[g].size(); ++k) {
        const std::size_t r = members[g][k];
        const double x = data.value(r, c);
        double repaired = (1.0 - repair_level) * x + repair_level * target(positions[g][k]);
        if (a.min) repaired = std::max(repaired, *a.min);
        if (a.max) repaired = std::min(repaired, *a.max);
        values[r * w + c] = repaired;
      }
    }
  }
  return data.with_values(std::move(values));
}

std::vector<int> reject_option_predict(const Matrix& probabilities, const std::vector<bool>& privileged,
                                       const CriticalRegion& region, int favorable_label) {
  std::vector<int> out = argmax(probabilities);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (region.contains(std::max(probabilities(r, 0), probabilities(r, 1)))) {
      out[i] = privileged[i] ? 1 - favorable_label : favorable_label;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jobs

Mlp baseline_model(const RepairJob& job) {
  if (job.baseline) return *job.baseline;
  TrainConfig config = job.config;
  config.use_sample_weights = false;
  config.fairness_penalty = 0.0;
  return train(encode(job.train, Encoding::fit(job.train)), config);
}

std::vector<bool> job_privileged_mask(const RepairJob& job, const Dataset& data) {
  if (job.config.penalty_attribute) {
    return privileged_mask(data, data.schema().index_of(*job.config.penalty_attribute));
  }
  return privileged_mask(data, job.metric.protected_set);
}

namespace {

struct Scored {
  double fairness;
  double accuracy;
  std::vector<int> predictions;
};

Scored score_model(const Mlp& model, const EvalSet& test, const FairnessMetric& metric) {
  auto preds = predict(model, test.inputs());
  std::vector<std::vector<int>> variants;
  if (metric.kind == MetricKind::kCds) {
    for (const auto& v : protected_variants(test, metric.protected_set)) variants.push_back(predict(model, v));
  }
  const double fairness = fairness_from_predictions(test, metric, preds, variants);
  const double acc = accuracy_from_predictions(preds, test.data().labels());
  return {fairness, acc, std::move(preds)};
}

RepairResult finish(Method method, const RepairJob& job, const Scored& before, Scored after,
                    std::optional<Mlp> model) {
  RepairResult result;
  result.model = std::move(model);
  result.outcome = {method, job.metric, before.fairness, after.fairness, before.accuracy, after.accuracy};
  result.predictions = std::move(after.predictions);
  return result;
}

}  // namespace

RepairResult repair_pre(const RepairJob& job, Method method, double dir_level) {
  if (category_of(method) != Category::kPre) throw ConfigError(to_string(method) + " is not a pre-processing method");
  job.metric.validate(job.train.schema());
  const Encoding encoding = Encoding::fit(job.train);
  const EvalSet test(job.test, encoding);
  const Mlp base = baseline_model(job);
  const Scored before = score_model(base, test, job.metric);

  TrainConfig config = job.config;
  config.fairness_penalty = 0.0;
  Mlp repaired = [&] {
    if (method == Method::kReweighing) {
      config.use_sample_weights = true;
      const Dataset weighted = job.train.with_weights(reweigh(job.train, job.metric.protected_set));
      return train(encode(weighted, encoding), config);
    }
    config.use_sample_weights = false;
    const Dataset moved = disparate_impact_remove(job.train, job.metric.protected_set, dir_level);
    return train(encode(moved, encoding), config);
  }();
  Scored after = score_model(repaired, test, job.metric);
  return finish(method, job, before, std::move(after), std::move(repaired));
}

RepairResult repair_in(const RepairJob& job, double fairness_penalty) {
  if (!(fairness_penalty >= 0.0)) throw ConfigError("fairness penalty must be non-negative");
  job.metric.validate(job.train.schema());
  const Encoding encoding = Encoding::fit(job.train);
  const EvalSet test(job.test, encoding);
  const Mlp base = baseline_model(job);
  const Scored before = score_model(base, test, job.metric);

  TrainConfig config = job.config;
  config.use_sample_weights = false;
  config.fairness_penalty = fairness_penalty;
  Mlp repaired = train(encode(job.train, encoding), config, job_privileged_mask(job, job.train));
  Scored after = score_model(repaired, test, job.metric);
  return finish(Method::kFairnessRegularizer, job, before, std::move(after), std::move(repaired));
}

RepairResult repair_post(const RepairJob& job, const CriticalRegion& region) {
  job.metric.validate(job.train.schema());
  const Encoding encoding = Encoding::fit(job.train);
  const EvalSet test(job.test, encoding);
  const Mlp base = baseline_model(job);
  const Scored before = score_model(base, test, job.metric);
  const int favorable = job.train.schema().favorable_label();

  const auto privileged = privileged_mask(job.test, job.metric.protected_set);
  std::vector<int> preds = reject_option_predict(forward(base, test.inputs()), privileged, region, favorable);
  std::vector<std::vector<int>> variants;
  if (job.metric.kind == MetricKind::kCds) {
    const auto all = valuations(job.test.schema(), job.metric.protected_set);
    const auto inputs = protected_variants(test, job.metric.protected_set);
    for (std::size_t v = 0; v < all.size(); ++v) {
      bool all_privileged = true;
      for (const auto& [index, group] : all[v].assignments) all_privileged = all_privileged && group == Group::kPrivileged;
      const std::vector<bool> flags(job.test.size(), all_privileged);
      variants.push_back(reject_option_predict(forward(base, inputs[v]), flags, region, favorable));
    }
  }
  Scored after{fairness_from_predictions(test, job.metric, preds, variants),
               accuracy_from_predictions(preds, job.test.labels()), preds};
  RepairResult result = finish(Method::kRejectOption, job, before, std::move(after), std::nullopt);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != before.predictions[i]) result.overlay[i] = preds[i];
  }
  return result;
}

RepairResult apply_method(const RepairJob& job, Method method, const RepairOptions& options) {
  switch (method) {
    case Method::kReweighing:
    case Method::kDisparateImpactRemover: return repair_pre(job, method, options.dir_level);
    case Method::kFairnessRegularizer: return repair_in(job, options.fairness_penalty);
    case Method::kRejectOption: return repair_post(job, CriticalRegion(options.theta_band));
  }
  throw ConfigError("unknown repair method");
}

std::string outcome_to_json(const RepairOutcome& outcome, const Schema& schema) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["method"] = to_string(outcome.method);
  j["category"] = to_string(category_of(outcome.method));
  j["metric"] = to_string(outcome.metric.kind);
  std::vector<std::string> names;
  for (std::size_t index : outcome.metric.protected_set) names.push_back(schema.attribute(index).name);
  j["protected"] = names;
  j["fairness_before"] = outcome.fairness_before;
  j["fairness_after"] = outcome.fairness_after;
  j["accuracy_before"] = outcome.accuracy_before;
  j["accuracy_after"] = outcome.accuracy_after;
  j["improvement"] = outcome.improvement();
  j["accuracy_delta"] = outcome.accuracy_delta();
  return j.dump(2);
}

std::string overlay_to_json(const PredictionOverlay& overlay) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [row, label] : overlay) rows.push_back({{"row", row}, {"label", label}});
  nlohmann::json j;
  j["format_version"] = 1;
  j["overrides"] = std::move(rows);
  return j.dump(2);
}

}  // namespace fairlens
