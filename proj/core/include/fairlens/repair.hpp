#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlens/dataset.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/model.hpp"

namespace fairlens {

enum class Category { kPre, kIn, kPost };

// One representative per category; DIR is the optional second
// pre-processing method.
enum class Method {
  kReweighing,
  kDisparateImpactRemover,
  kFairnessRegularizer,
  kRejectOption,
};

std::string to_string(Category category);
std::string to_string(Method method);
Category parse_category(std::string_view text);
Method parse_method(std::string_view text);
Category category_of(Method method);

struct RepairOutcome {
  Method method = Method::kReweighing;
  FairnessMetric metric;
  double fairness_before = 0.0;
  double fairness_after = 0.0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;

  // Positive means fairer.
  double improvement() const { return fairness_before - fairness_after; }
  double accuracy_delta() const { return accuracy_after - accuracy_before; }
};

// Rows whose larger class probability is at most `theta_band` are inside
// the uncertainty band around the decision boundary.
struct CriticalRegion {
  double theta_band = 0.7;

  explicit CriticalRegion(double band = 0.7);
  bool contains(double max_probability) const { return max_probability <= theta_band; }
};

// Kamiran-Calders reweighing over a partition of the rows: a row in group g
// with label c gets count(g) * count(c) / (n * count(g and c)). Throws
// ConfigError when any (group, label) cell is empty.
std::vector<double> reweigh_groups(std::span<const int> labels, std::span<const std::size_t> group_of,
                                   std::size_t groups);
// Privileged/unprivileged partition of one protected attribute.
std::vector<double> reweigh(const Dataset& data, std::size_t attribute);
// Partition by protected valuation of F.
std::vector<double> reweigh(const Dataset& data, const ProtectedSet& protected_set);

// Rank-preserving quantile repair of every continuous non-protected
// attribute: each value moves toward the median across groups of the group
// quantile functions at its within-group quantile, by `repair_level`.
Dataset disparate_impact_remove(const Dataset& data, const ProtectedSet& protected_set,
                                double repair_level);

// Row index -> label for every prediction the post-processor changed.
using PredictionOverlay = std::map<std::size_t, int>;

// Reject-option labels: inside the band, privileged rows get the
// unfavorable label and unprivileged rows the favorable one.
std::vector<int> reject_option_predict(const Matrix& probabilities, const std::vector<bool>& privileged,
                                       const CriticalRegion& region, int favorable_label);

// Shared inputs of every repair: the baseline model is trained from
// `config` on `train` when not supplied; every outcome is scored on `test`.
struct RepairJob {
  TrainConfig config;
  Dataset train;
  Dataset test;
  FairnessMetric metric;
  std::optional<Mlp> baseline;
};

struct RepairOptions {
  double fairness_penalty = 0.5;
  double theta_band = 0.7;
  double dir_level = 1.0;
};

struct RepairResult {
  std::optional<Mlp> model;      // pre and in
  PredictionOverlay overlay;     // post
  std::vector<int> predictions;  // final predictions on the test split
  RepairOutcome outcome;
};

// Baseline model for a job (trains it when the job carries none).
Mlp baseline_model(const RepairJob& job);

// Privileged mask used by training penalties and reject option: the penalty
// attribute when the config names one, else "privileged on every attribute
// of the metric's F".
std::vector<bool> job_privileged_mask(const RepairJob& job, const Dataset& data);

RepairResult repair_pre(const RepairJob& job, Method method, double dir_level = 1.0);
RepairResult repair_in(const RepairJob& job, double fairness_penalty);
RepairResult repair_post(const RepairJob& job, const CriticalRegion& region);
RepairResult apply_method(const RepairJob& job, Method method, const RepairOptions& options = {});

std::string outcome_to_json(const RepairOutcome& outcome, const Schema& schema);
std::string overlay_to_json(const PredictionOverlay& overlay);

}  // namespace fairlens
