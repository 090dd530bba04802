#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairlens/dataset.hpp"
#include "fairlens/model.hpp"

namespace fairlens {

enum class MetricKind { kSpd, kGds, kCds };

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view text);

// A fairness score selector: which score, over which protected attributes.
struct FairnessMetric {
  MetricKind kind = MetricKind::kSpd;
  ProtectedSet protected_set;

  // SPD needs exactly one protected attribute; GDS and CDS need at least one.
  void validate(const Schema& schema) const;
};

// Raw rows, which decide group membership, paired with the encoded inputs
// the model sees.
class EvalSet {
 public:
  EvalSet(Dataset data, Encoding encoding);

  const Dataset& data() const { return data_; }
  const Schema& schema() const { return data_.schema(); }
  const Matrix& inputs() const { return inputs_; }
  const Encoding& encoding() const { return encoding_; }
  std::size_t size() const { return data_.size(); }

 private:
  Dataset data_;
  Encoding encoding_;
  Matrix inputs_;
};

struct ScoreReport {
  FairnessMetric metric;
  double value = 0.0;
  // Favorable-prediction rate per protected valuation (GDS only).
  std::vector<std::pair<std::string, double>> rates;
  double accuracy = 0.0;
};

// --- Scores over precomputed predictions -----------------------------------

// `attribute` only names the attribute in the empty-group error.
double spd_from_predictions(std::span<const int> predictions, const std::vector<bool>& privileged,
                            int favorable_label, std::string_view attribute = {});
// Largest pairwise gap of a set of rates.
double max_gap(std::span<const double> rates);
// Favorable rate of each valuation group. `group_of[i]` indexes the
// valuation row i belongs to. Throws MetricError on an empty group.
std::vector<double> group_rates(std::span<const int> predictions,
                                std::span<const std::size_t> group_of, std::size_t groups,
                                int favorable_label,
                                std::span<const std::string> group_names = {});
// Fraction of rows whose prediction differs from at least one of its
// protected variants.
double cds_from_variants(std::span<const int> predictions,
                         const std::vector<std::vector<int>>& variant_predictions);
double accuracy_from_predictions(std::span<const int> predictions, std::span<const int> labels);

// Score of already computed predictions. CDS needs the predictions of every
// protected variant (see protected_variants), in valuations() order.
double fairness_from_predictions(const EvalSet& set, const FairnessMetric& metric,
                                 std::span<const int> predictions,
                                 const std::vector<std::vector<int>>& variant_predictions = {});

// Encoded copies of the inputs with every attribute in F set to one
// group representative; one matrix per valuation, in valuations() order.
std::vector<Matrix> protected_variants(const EvalSet& set, const ProtectedSet& protected_set);

// --- Model-level scores ----------------------------------------------------

// |P[Y=l | unprivileged] - P[Y=l | privileged]|. Under an intervention the
// model inputs change but group membership still comes from the original
// row values.
double spd(const Mlp& model, const EvalSet& set, std::size_t attribute,
           const std::optional<Intervention>& intervention = {});

// Maximum pairwise gap of P_theta over all valuations of F.
ScoreReport gds(const Mlp& model, const EvalSet& set, const ProtectedSet& protected_set,
                const std::optional<Intervention>& intervention = {});

// True iff some protected variant of `row` is predicted differently from
// the row itself.
bool is_discriminatory(const Mlp& model, const Schema& schema, const Encoding& encoding,
                       std::span<const double> row, const ProtectedSet& protected_set);

double cds(const Mlp& model, const EvalSet& set, const ProtectedSet& protected_set,
           const std::optional<Intervention>& intervention = {});

double accuracy(const Mlp& model, const EvalSet& set);

double fairness_score(const Mlp& model, const EvalSet& set, const FairnessMetric& metric,
                      const std::optional<Intervention>& intervention = {});

// Score plus accuracy; GDS reports also carry per-valuation rates.
ScoreReport evaluate(const Mlp& model, const EvalSet& set, const FairnessMetric& metric);

std::string score_report_to_json(const ScoreReport& report, const Schema& schema);

}  // namespace fairlens
