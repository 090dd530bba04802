#include "fairlens/selector.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "fairlens/error.hpp"

namespace fairlens {

std::string to_string(Branch branch) {
  switch (branch) {
    case Branch::kBelowThreshold: return "below-threshold";
    case Branch::kAttributesDominate: return "attributes-dominate";
    case Branch::kOtherwise: return "otherwise";
  }
  return "?";
}

namespace {

Branch parse_branch(std::string_view text) {
  if (text == "below-threshold") return Branch::kBelowThreshold;
  if (text == "attributes-dominate") return Branch::kAttributesDominate;
  if (text == "otherwise") return Branch::kOtherwise;
  throw FormatError("unknown branch '" + std::string(text) + "'");
}

Category category_for(Branch branch) {
  switch (branch) {
    case Branch::kBelowThreshold: return Category::kPost;
    case Branch::kAttributesDominate: return Category::kPre;
    case Branch::kOtherwise: return Category::kIn;
  }
  return Category::kIn;
}

std::string cv_text(const std::optional<double>& cv) {
  if (!cv) return "undefined";
  std::ostringstream out;
  out << *cv;
  return out.str();
}

}  // namespace

Branch select_branch(const ResponsibilityStats& stats, double p_thres) {
  if (stats.p_f <= p_thres && stats.p_n <= p_thres) return Branch::kBelowThreshold;
  if (!stats.cv_f && !stats.cv_n) {
    throw ConfigError("responsibility proportions exceed the threshold but no coefficient of variation is defined");
  }
  if (stats.cv_f && (!stats.cv_n || *stats.cv_f > *stats.cv_n)) return Branch::kAttributesDominate;
  return Branch::kOtherwise;
}

Category select_category(const ResponsibilityStats& stats, double p_thres) {
  return category_for(select_branch(stats, p_thres));
}

Method select_method(Category category, MetricKind /*metric*/, const MethodOptions& options,
                     const CandidateEvaluator& evaluator) {
  std::vector<Method> candidates;
  for (Method m : options.enabled) {
    if (category_of(m) == category && std::find(candidates.begin(), candidates.end(), m) == candidates.end()) {
      candidates.push_back(m);
    }
  }
  if (candidates.empty()) throw ConfigError("no repair method enabled for " + to_string(category));
  if (candidates.size() == 1) return candidates.front();
  if (!evaluator) throw ConfigError("several " + to_string(category) + " methods enabled but no evaluator given");

  Method best = candidates.front();
  double best_score = options.score(evaluator(best));
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = options.score(evaluator(candidates[i]));
    if (s > best_score) {
      best_score = s;
      best = candidates[i];
    }
  }
  return best;
}

CandidateEvaluator validation_evaluator(const RepairJob& job, const RepairOptions& repair_options,
                                        double train_fraction, std::uint64_t seed) {
  auto [fit, validation] = split(job.train, train_fraction, seed);
  RepairJob inner{job.config, std::move(fit), std::move(validation), job.metric, std::nullopt};
  inner.baseline = baseline_model(inner);
  return [inner = std::move(inner), repair_options](Method method) {
    return apply_method(inner, method, repair_options).outcome;
  };
}

Recommendation recommend_from_stats(const ResponsibilityStats& stats, MetricKind metric, double p_thres,
                                    const MethodOptions& options, const CandidateEvaluator& evaluator) {
  Recommendation r;
  r.stats = stats;
  r.p_thres = p_thres;
  r.metric = metric;
  r.branch = select_branch(stats, p_thres);
  r.category = category_for(r.branch);
  r.method = select_method(r.category, metric, options, evaluator);

  std::ostringstream why;
  why << "P_f=" << stats.p_f << ", P_n=" << stats.p_n << ", CV_f=" << cv_text(stats.cv_f)
      << ", CV_n=" << cv_text(stats.cv_n) << ": ";
  switch (r.branch) {
    case Branch::kBelowThreshold:
      why << "both proportions are at most " << p_thres << ", so repair the predictions";
      break;
    case Branch::kAttributesDominate:
      why << "CV_f exceeds CV_n, so repair the training data";
      break;
    case Branch::kOtherwise:
      why << "CV_f does not exceed CV_n, so repair the training procedure";
      break;
  }
  why << " (" << to_string(r.method) << ")";
  r.rationale = why.str();
  return r;
}

Recommendation recommend(const Mlp& model, const EvalSet& set, const FairnessMetric& metric, double p_thres,
                         std::size_t num_interval, const MethodOptions& options,
                         const CandidateEvaluator& evaluator) {
  const Analysis analysis = analyze_all(model, set, metric, num_interval);
  return recommend_from_stats(analysis.stats, metric.kind, p_thres, options, evaluator);
}

std::string recommendation_to_json(const Recommendation& recommendation) {
  nlohmann::json j;
  j["format_version"] = kRecommendationFormatVersion;
  j["category"] = to_string(recommendation.category);
  j["method"] = to_string(recommendation.method);
  j["branch"] = to_string(recommendation.branch);
  j["p_thres"] = recommendation.p_thres;
  j["metric"] = to_string(recommendation.metric);
  j["rationale"] = recommendation.rationale;
  j["stats"] = nlohmann::json::parse(stats_to_json(recommendation.stats));
  return j.dump(2);
}

Recommendation recommendation_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != kRecommendationFormatVersion) {
      throw FormatError("unsupported recommendation format_version");
    }
    Recommendation r;
    r.category = parse_category(j.at("category").get<std::string>());
    r.method = parse_method(j.at("method").get<std::string>());
    r.branch = parse_branch(j.at("branch").get<std::string>());
    r.p_thres = j.at("p_thres").get<double>();
    r.metric = parse_metric_kind(j.at("metric").get<std::string>());
    r.rationale = j.value("rationale", std::string{});
    r.stats = stats_from_json(j.at("stats").dump());
    if (category_of(r.method) != r.category) throw FormatError("method does not belong to the recommended category");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed recommendation file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed recommendation file: ") + e.what());
  }
}

}  // namespace fairlens
