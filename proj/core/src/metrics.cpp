#include "fairlens/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fairlens/error.hpp"

namespace fairlens {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kSpd: return "spd";
    case MetricKind::kGds: return "gds";
    case MetricKind::kCds: return "cds";
  }
  return "?";
}

MetricKind parse_metric_kind(std::string_view text) {
  if (text == "spd" || text == "SPD") return MetricKind::kSpd;
  if (text == "gds" || text == "GDS") return MetricKind::kGds;
  if (text == "cds" || text == "CDS") return MetricKind::kCds;
  throw ConfigError("unknown metric '" + std::string(text) + "' (expected spd, gds or cds)");
}

void FairnessMetric::validate(const Schema& schema) const {
  if (protected_set.empty()) throw ConfigError(to_string(kind) + " needs a protected attribute");
  if (kind == MetricKind::kSpd && protected_set.size() != 1) {
    throw ConfigError("spd is defined over exactly one protected attribute");
  }
  for (std::size_t index : protected_set) {
    if (!schema.is_protected(index)) {
      throw ConfigError("attribute #" + std::to_string(index) + " is not protected");
    }
  }
}

EvalSet::EvalSet(Dataset data, Encoding encoding)
    : data_(std::move(data)), encoding_(std::move(encoding)) {
  inputs_ = encode(data_, encoding_).features;
}

// ---------------------------------------------------------------------------

double spd_from_predictions(std::span<const int> predictions, const std::vector<bool>& privileged,
                            int favorable_label, std::string_view attribute) {
  double fav_priv = 0.0, fav_unpriv = 0.0;
  std::size_t n_priv = 0, n_unpriv = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool fav = predictions[i] == favorable_label;
    if (privileged[i]) {
      ++n_priv;
      fav_priv += fav;
    } else {
      ++n_unpriv;
      fav_unpriv += fav;
    }
  }
  const std::string of = attribute.empty() ? "" : " of '" + std::string(attribute) + "'";
  if (n_priv == 0) throw MetricError("privileged group" + of + " is empty");
  if (n_unpriv == 0) throw MetricError("unprivileged group" + of + " is empty");
  return std::abs(fav_unpriv / static_cast<double>(n_unpriv) - fav_priv / static_cast<double>(n_priv));
}

double max_gap(std::span<const double> rates) {
  if (rates.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  return *hi - *lo;
}

std::vector<double> group_rates(std::span<const int> predictions,
                                std::span<const std::size_t> group_of, std::size_t groups,
                                int favorable_label, std::span<const std::string> group_names) {
  std::vector<double> favorable(groups, 0.0);
  std::vector<std::size_t> counts(groups, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t g = group_of[i];
    if (g >= groups) continue;
    ++counts[g];
    favorable[g] += predictions[i] == favorable_label;
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (counts[g] == 0) {
      const std::string name = g < group_names.size() ? group_names[g] : "#" + std::to_string(g);
      throw MetricError("protected group (" + name + ") is empty");
    }
    favorable[g] /= static_cast<double>(counts[g]);
  }
  return favorable;
}

double cds_from_variants(std::span<const int> predictions,
                         const std::vector<std::vector<int>>& variant_predictions) {
  if (predictions.empty()) throw MetricError("cds on an empty dataset");
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (const auto& variant : variant_predictions) {
      if (variant[i] != predictions[i]) {
        ++flagged;
        break;
      }
    }
  }
  return static_cast<double>(flagged) / static_cast<double>(predictions.size());
}

double accuracy_from_predictions(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw MetricError("accuracy on an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double fairness_from_predictions(const EvalSet& set, const FairnessMetric& metric,
                                 std::span<const int> predictions,
                                 const std::vector<std::vector<int>>& variant_predictions) {
  metric.validate(set.schema());
  const int favorable = set.schema().favorable_label();
  switch (metric.kind) {
    case MetricKind::kSpd:
      return spd_from_predictions(predictions, privileged_mask(set.data(), metric.protected_set.front()),
                                  favorable, set.schema().attribute(metric.protected_set.front()).name);
    case MetricKind::kGds: {
      const auto all = valuations(set.schema(), metric.protected_set);
      std::vector<std::string> names;
      for (const auto& v : all) names.push_back(v.describe(set.schema()));
      return max_gap(group_rates(predictions, valuation_index(set.data(), all), all.size(), favorable, names));
    }
    case MetricKind::kCds:
      if (variant_predictions.size() != (std::size_t{1} << metric.protected_set.size())) {
        throw ConfigError("cds needs one prediction vector per protected valuation");
      }
      return cds_from_variants(predictions, variant_predictions);
  }
  return 0.0;
}

std::vector<Matrix> protected_variants(const EvalSet& set, const ProtectedSet& protected_set) {
  std::vector<Matrix> out;
  for (const auto& v : valuations(set.schema(), protected_set)) {
    Matrix m = set.inputs();
    for (const auto& [index, group] : v.assignments) {
      const double raw = set.schema().predicate(index).representative(group);
      m.col(static_cast<Eigen::Index>(index)).setConstant(set.encoding().encode(index, raw));
    }
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<Overlay> overlay_for(const EvalSet& set, const std::optional<Intervention>& intervention) {
  if (!intervention) return std::nullopt;
  return resolve(*intervention, set.schema(), set.encoding());
}

std::vector<std::string> valuation_names(const Schema& schema, const std::vector<ProtectedValuation>& all) {
  std::vector<std::string> names;
  for (const auto& v : all) names.push_back(v.describe(schema));
  return names;
}

}  // namespace

double spd(const Mlp& model, const EvalSet& set, std::size_t attribute,
           const std::optional<Intervention>& intervention) {
  const auto preds = predict(model, set.inputs(), overlay_for(set, intervention));
  return spd_from_predictions(preds, privileged_mask(set.data(), attribute), set.schema().favorable_label(),
                              set.schema().attribute(attribute).name);
}

ScoreReport gds(const Mlp& model, const EvalSet& set, const ProtectedSet& protected_set,
                const std::optional<Intervention>& intervention) {
  const auto all = valuations(set.schema(), protected_set);
  const auto names = valuation_names(set.schema(), all);
  const auto preds = predict(model, set.inputs(), overlay_for(set, intervention));
  const auto rates = group_rates(preds, valuation_index(set.data(), all), all.size(),
                                 set.schema().favorable_label(), names);
  ScoreReport report;
  report.metric = {MetricKind::kGds, protected_set};
  report.value = max_gap(rates);
  for (std::size_t i = 0; i < rates.size(); ++i) report.rates.emplace_back(names[i], rates[i]);
  report.accuracy = accuracy_from_predictions(preds, set.data().labels());
  return report;
}

bool is_discriminatory(const Mlp& model, const Schema& schema, const Encoding& encoding,
                       std::span<const double> row, const ProtectedSet& protected_set) {
  Matrix x(1, static_cast<Eigen::Index>(row.size()));
  for (std::size_t c = 0; c < row.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = encoding.encode(c, row[c]);
  const int base = predict(model, x)[0];
  for (const auto& v : valuations(schema, protected_set)) {
    Matrix variant = x;
    for (const auto& [index, group] : v.assignments) {
      variant(0, static_cast<Eigen::Index>(index)) =
          encoding.encode(index, schema.predicate(index).representative(group));
    }
    if (predict(model, variant)[0] != base) return true;
  }
  return false;
}

double cds(const Mlp& model, const EvalSet& set, const ProtectedSet& protected_set,
           const std::optional<Intervention>& intervention) {
  const auto overlay = overlay_for(set, intervention);
  const auto preds = predict(model, set.inputs(), overlay);
  std::vector<std::vector<int>> variant_preds;
  for (const auto& variant : protected_variants(set, protected_set)) {
    variant_preds.push_back(predict(model, variant, overlay));
  }
  return cds_from_variants(preds, variant_preds);
}

double accuracy(const Mlp& model, const EvalSet& set) {
  return accuracy_from_predictions(predict(model, set.inputs()), set.data().labels());
}

double fairness_score(const Mlp& model, const EvalSet& set, const FairnessMetric& metric,
                      const std::optional<Intervention>& intervention) {
  metric.validate(set.schema());
  switch (metric.kind) {
    case MetricKind::kSpd: return spd(model, set, metric.protected_set.front(), intervention);
    case MetricKind::kGds: return gds(model, set, metric.protected_set, intervention).value;
    case MetricKind::kCds: return cds(model, set, metric.protected_set, intervention);
  }
  return 0.0;
}

ScoreReport evaluate(const Mlp& model, const EvalSet& set, const FairnessMetric& metric) {
  metric.validate(set.schema());
  if (metric.kind == MetricKind::kGds) return gds(model, set, metric.protected_set);
  ScoreReport report;
  report.metric = metric;
  report.value = fairness_score(model, set, metric);
  report.accuracy = accuracy(model, set);
  return report;
}

std::string score_report_to_json(const ScoreReport& report, const Schema& schema) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["metric"] = to_string(report.metric.kind);
  std::vector<std::string> names;
  for (std::size_t index : report.metric.protected_set) names.push_back(schema.attribute(index).name);
  j["protected"] = names;
  j["value"] = report.value;
  j["accuracy"] = report.accuracy;
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& [name, rate] : report.rates) rates.push_back({{"valuation", name}, {"rate", rate}});
  j["rates"] = std::move(rates);
  return j.dump(2);
}

}  // namespace fairlens
