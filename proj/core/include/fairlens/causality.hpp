#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlens/metrics.hpp"
#include "fairlens/model.hpp"

namespace fairlens {

// Average interventional expectation of one attribute or hidden neuron:
// the fairness score under do(target = alpha), averaged over `values_used`.
struct AieRecord {
  Target target;
  FairnessMetric metric;
  double baseline = 0.0;  // score without any intervention
  std::vector<double> values_used;
  std::vector<double> expectations;
  double aie = 0.0;

  bool is_neuron() const { return std::holds_alternative<NeuronTarget>(target); }
  // Strictly above the baseline.
  bool responsible() const { return aie > baseline; }
};

struct ResponsibilityStats {
  double baseline = 0.0;
  double p_f = 0.0;
  double p_n = 0.0;
  std::optional<double> cv_f;  // undefined when no attribute is responsible
  std::optional<double> cv_n;
  std::vector<std::string> responsible_attributes;
  std::vector<NeuronTarget> responsible_neurons;
  std::size_t attribute_count = 0;
  std::size_t neuron_count = 0;
};

inline constexpr std::size_t kDefaultNumInterval = 20;

// `num_interval` evenly spaced values from min to max inclusive; a single
// value (min) when num_interval is 1.
std::vector<double> generate_vals(double min, double max, std::size_t num_interval);

// Population standard deviation over mean; nullopt for an empty input.
std::optional<double> coefficient_of_variation(std::span<const double> values);

// Clamps neuron `neuron` over the observed range of its output on `set`.
AieRecord causality_neuron(const Mlp& model, const EvalSet& set, NeuronTarget neuron,
                           const FairnessMetric& metric, std::size_t num_interval = kDefaultNumInterval);

// Categorical attributes sweep every value observed in `set`; continuous
// ones sweep `num_interval` values across the observed range.
AieRecord causality_attribute(const Mlp& model, const EvalSet& set, const std::string& attribute,
                              const FairnessMetric& metric,
                              std::size_t num_interval = kDefaultNumInterval);

// aie - baseline.
double ace(const AieRecord& record);

// Proportions and coefficients of variation of the records whose AIE
// exceeds `baseline`.
ResponsibilityStats responsibility(std::span<const AieRecord> records, double baseline);

struct Analysis {
  std::vector<AieRecord> records;  // attributes first, then neurons layer by layer
  ResponsibilityStats stats;
};

// Number of sweep workers: FAIRLENS_THREADS when set, else the hardware
// concurrency.
std::size_t sweep_threads();

Analysis analyze_all(const Mlp& model, const EvalSet& set, const FairnessMetric& metric,
                     std::size_t num_interval = kDefaultNumInterval, std::size_t threads = 0);

inline constexpr int kAnalysisFormatVersion = 1;

// One row per target: kind, layer, index, name, baseline, aie, ace,
// responsible.
std::string aie_table_csv(std::span<const AieRecord> records);
std::string stats_to_json(const ResponsibilityStats& stats);
ResponsibilityStats stats_from_json(std::string_view text);

}  // namespace fairlens
