#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fairlens/causality.hpp"
#include "fairlens/repair.hpp"

namespace fairlens {

inline constexpr double kDefaultPThres = 0.10;

enum class Branch {
  kBelowThreshold,      // both proportions within P_thres
  kAttributesDominate,  // CV_f > CV_n
  kOtherwise,
};

std::string to_string(Branch branch);

struct Recommendation {
  Category category = Category::kPost;
  Method method = Method::kRejectOption;
  Branch branch = Branch::kBelowThreshold;
  ResponsibilityStats stats;
  double p_thres = kDefaultPThres;
  MetricKind metric = MetricKind::kSpd;
  std::string rationale;
};

// Which branch of the adaptive rule fires. Throws ConfigError when a
// proportion exceeds the threshold while neither CV is defined.
Branch select_branch(const ResponsibilityStats& stats, double p_thres = kDefaultPThres);
Category select_category(const ResponsibilityStats& stats, double p_thres = kDefaultPThres);

struct MethodOptions {
  std::vector<Method> enabled{Method::kReweighing, Method::kFairnessRegularizer, Method::kRejectOption};
  double fairness_weight = 1.0;
  double accuracy_weight = 1.0;

  double score(const RepairOutcome& outcome) const {
    return fairness_weight * outcome.improvement() + accuracy_weight * outcome.accuracy_delta();
  }
};

// Runs one candidate repair and reports its outcome.
using CandidateEvaluator = std::function<RepairOutcome(Method)>;

// The single enabled method of `category`; with several enabled, the one
// whose evaluated outcome scores highest (earlier in `enabled` on ties).
// RW is the pre-processing choice unless DIR is enabled explicitly.
Method select_method(Category category, MetricKind metric, const MethodOptions& options = {},
                     const CandidateEvaluator& evaluator = {});

// Scores candidates by repairing on a split of the job's training rows and
// scoring on the held-out remainder.
CandidateEvaluator validation_evaluator(const RepairJob& job, const RepairOptions& repair_options,
                                        double train_fraction = 0.8, std::uint64_t seed = 0);

Recommendation recommend_from_stats(const ResponsibilityStats& stats, MetricKind metric,
                                    double p_thres = kDefaultPThres, const MethodOptions& options = {},
                                    const CandidateEvaluator& evaluator = {});

// Causality analysis of `model` on `set`, then the adaptive rule.
Recommendation recommend(const Mlp& model, const EvalSet& set, const FairnessMetric& metric,
                         double p_thres = kDefaultPThres, std::size_t num_interval = kDefaultNumInterval,
                         const MethodOptions& options = {}, const CandidateEvaluator& evaluator = {});

inline constexpr int kRecommendationFormatVersion = 1;

std::string recommendation_to_json(const Recommendation& recommendation);
Recommendation recommendation_from_json(std::string_view text);

}  // namespace fairlens
