#include "fairlens/causality.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fairlens/error.hpp"
#include "util.hpp"

namespace fairlens {

std::vector<double> generate_vals(double min, double max, std::size_t num_interval) {
  if (num_interval == 0) throw ConfigError("num_interval must be at least 1");
  if (min > max) throw ConfigError("generate_vals: min exceeds max");
  if (num_interval == 1) return {min};
  std::vector<double> out(num_interval);
  const double step = (max - min) / static_cast<double>(num_interval - 1);
  for (std::size_t i = 0; i < num_interval; ++i) out[i] = min + step * static_cast<double>(i);
  out.back() = max;
  return out;
}

std::optional<double> coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (mean == 0.0) return sd == 0.0 ? std::optional<double>(0.0) : std::nullopt;
  return sd / mean;
}

double ace(const AieRecord& record) { return record.aie - record.baseline; }

namespace {

// Read-only state shared by every intervention of one sweep: cached
// activations for the evaluation inputs (and, for CDS, every protected
// variant of them) plus the group structure the metric needs.
class SweepContext {
 public:
  SweepContext(const Mlp& model, const EvalSet& set, const FairnessMetric& metric)
      : model_(model), set_(set), metric_(metric) {
    metric_.validate(set.schema());
    if (set.size() == 0) throw MetricError("causality analysis on an empty dataset");
    sources_.push_back(set.inputs());
    if (metric.kind == MetricKind::kCds) {
      for (auto& v : protected_variants(set, metric.protected_set)) sources_.push_back(std::move(v));
    }
    const auto& layers = model.layers();
    for (const auto& source : sources_) {
      ForwardTrace t = trace(model, source);
      std::vector<Matrix> next;
      for (std::size_t l = 0; l < model.hidden_layer_count(); ++l) {
        Matrix z = t.hidden[l] * layers[l + 1].weights.transpose();
        z.rowwise() += layers[l + 1].bias.transpose();
        next.push_back(std::move(z));
      }
      traces_.push_back(std::move(t));
      next_pre_.push_back(std::move(next));
    }
    const int favorable = set.schema().favorable_label();
    favorable_ = favorable;
    if (metric.kind == MetricKind::kSpd) {
      privileged_ = privileged_mask(set.data(), metric.protected_set.front());
    } else if (metric.kind == MetricKind::kGds) {
      const auto all = valuations(set.schema(), metric.protected_set);
      group_count_ = all.size();
      group_of_ = valuation_index(set.data(), all);
      for (const auto& v : all) group_names_.push_back(v.describe(set.schema()));
    }
  }

  const EvalSet& set() const { return set_; }
  const Matrix& hidden(std::size_t layer) const { return traces_.front().hidden[layer]; }

  double baseline() const {
    std::vector<std::vector<int>> preds;
    for (const auto& t : traces_) preds.push_back(argmax(t.probabilities));
    return score(preds);
  }

  double neuron(NeuronTarget n, double alpha) const {
    const auto& w = model_.layers()[n.layer + 1].weights;
    const auto j = static_cast<Eigen::Index>(n.index);
    std::vector<std::vector<int>> preds;
    for (std::size_t s = 0; s < traces_.size(); ++s) {
      // Rank-one update of the next layer's pre-activation.
      Matrix z = next_pre_[s][n.layer];
      const auto shift = (alpha - traces_[s].hidden[n.layer].col(j).array()).matrix();
      z.noalias() += shift * w.col(j).transpose();
      preds.push_back(argmax(propagate_preactivation(model_, n.layer + 1, std::move(z))));
    }
    return score(preds);
  }

  double input(std::size_t column, double encoded) const {
    const InputClamp clamp{column, encoded};
    std::vector<std::vector<int>> preds;
    for (const auto& source : sources_) preds.push_back(predict(model_, source, Overlay{clamp}));
    return score(preds);
  }

 private:
  double score(const std::vector<std::vector<int>>& preds) const {
    switch (metric_.kind) {
      case MetricKind::kSpd: return spd_from_predictions(preds.front(), privileged_, favorable_);
      case MetricKind::kGds: {
        const auto rates = group_rates(preds.front(), group_of_, group_count_, favorable_, group_names_);
        return max_gap(rates);
      }
      case MetricKind::kCds: {
        std::vector<std::vector<int>> variants(preds.begin() + 1, preds.end());
        return cds_from_variants(preds.front(), variants);
      }
    }
    return 0.0;
  }

  const Mlp& model_;
  const EvalSet& set_;
  FairnessMetric metric_;
  std::vector<Matrix> sources_;
  std::vector<ForwardTrace> traces_;
  std::vector<std::vector<Matrix>> next_pre_;
  int favorable_ = 1;
  std::vector<bool> privileged_;
  std::vector<std::size_t> group_of_;
  std::size_t group_count_ = 0;
  std::vector<std::string> group_names_;
};

void finish(AieRecord& record) {
  record.aie = std::accumulate(record.expectations.begin(), record.expectations.end(), 0.0) /
               static_cast<double>(record.expectations.size());
}

AieRecord sweep_neuron(const SweepContext& ctx, const Mlp& model, NeuronTarget n,
                       const FairnessMetric& metric, double baseline, std::size_t num_interval) {
  model.check(NeuronClamp{n, 0.0});
  const auto col = ctx.hidden(n.layer).col(static_cast<Eigen::Index>(n.index));
  AieRecord record{n, metric, baseline, generate_vals(col.minCoeff(), col.maxCoeff(), num_interval), {}, 0.0};
  for (double alpha : record.values_used) record.expectations.push_back(ctx.neuron(n, alpha));
  finish(record);
  return record;
}

AieRecord sweep_attribute(const SweepContext& ctx, const std::string& name,
                          const FairnessMetric& metric, double baseline, std::size_t num_interval) {
  const EvalSet& set = ctx.set();
  const std::size_t column = set.schema().index_of(name);
  const Attribute& a = set.schema().attribute(column);
  const auto values = set.data().column(column);
  AieRecord record{AttributeTarget{name}, metric, baseline, {}, {}, 0.0};
  if (a.is_categorical()) {
    const std::set<double> observed(values.begin(), values.end());
    record.values_used.assign(observed.begin(), observed.end());
  } else {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    record.values_used = generate_vals(*lo, *hi, num_interval);
  }
  for (double alpha : record.values_used) {
    record.expectations.push_back(ctx.input(column, set.encoding().encode(column, alpha)));
  }
  finish(record);
  return record;
}

}  // namespace

AieRecord causality_neuron(const Mlp& model, const EvalSet& set, NeuronTarget neuron,
                           const FairnessMetric& metric, std::size_t num_interval) {
  model.check(NeuronClamp{neuron, 0.0});
  const SweepContext ctx(model, set, metric);
  return sweep_neuron(ctx, model, neuron, metric, ctx.baseline(), num_interval);
}

AieRecord causality_attribute(const Mlp& model, const EvalSet& set, const std::string& attribute,
                              const FairnessMetric& metric, std::size_t num_interval) {
  (void)set.schema().index_of(attribute);
  const SweepContext ctx(model, set, metric);
  return sweep_attribute(ctx, attribute, metric, ctx.baseline(), num_interval);
}

ResponsibilityStats responsibility(std::span<const AieRecord> records, double baseline) {
  ResponsibilityStats stats;
  stats.baseline = baseline;
  std::vector<double> attr_aie, neuron_aie;
  for (const auto& r : records) {
    const bool responsible = r.aie > baseline;
    if (r.is_neuron()) {
      ++stats.neuron_count;
      if (responsible) {
        neuron_aie.push_back(r.aie);
        stats.responsible_neurons.push_back(std::get<NeuronTarget>(r.target));
      }
    } else {
      ++stats.attribute_count;
      if (responsible) {
        attr_aie.push_back(r.aie);
        stats.responsible_attributes.push_back(std::get<AttributeTarget>(r.target).name);
      }
    }
  }
  if (stats.attribute_count > 0) {
    stats.p_f = static_cast<double>(attr_aie.size()) / static_cast<double>(stats.attribute_count);
  }
  if (stats.neuron_count > 0) {
    stats.p_n = static_cast<double>(neuron_aie.size()) / static_cast<double>(stats.neuron_count);
  }
  stats.cv_f = coefficient_of_variation(attr_aie);
  stats.cv_n = coefficient_of_variation(neuron_aie);
  return stats;
}

std::size_t sweep_threads() {
  if (const char* env = std::getenv("FAIRLENS_THREADS")) {
    if (const auto v = detail::parse_double(env); v && *v >= 1.0) return static_cast<std::size_t>(*v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

Analysis analyze_all(const Mlp& model, const EvalSet& set, const FairnessMetric& metric,
                     std::size_t num_interval, std::size_t threads) {
  if (num_interval == 0) throw ConfigError("num_interval must be at least 1");
  const SweepContext ctx(model, set, metric);
  const double baseline = ctx.baseline();

  std::vector<Target> targets;
  for (const auto& a : set.schema().attributes()) targets.emplace_back(AttributeTarget{a.name});
  for (const auto& n : model.hidden_neurons()) targets.emplace_back(n);

  Analysis result;
  result.records.resize(targets.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < targets.size(); i = next++) {
      try {
        if (const auto* a = std::get_if<AttributeTarget>(&targets[i])) {
          result.records[i] = sweep_attribute(ctx, a->name, metric, baseline, num_interval);
        } else {
          result.records[i] = sweep_neuron(ctx, model, std::get<NeuronTarget>(targets[i]), metric,
                                           baseline, num_interval);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = targets.size();
      }
    }
  };
  const std::size_t n_threads = std::min(targets.size(), threads == 0 ? sweep_threads() : threads);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  result.stats = responsibility(result.records, baseline);
  return result;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + '"';
}

}  // namespace

std::string aie_table_csv(std::span<const AieRecord> records) {
  std::ostringstream out;
  out << "# format_version=" << kAnalysisFormatVersion << '\n';
  out << "kind,layer,index,name,baseline,aie,ace,responsible\n";
  for (const auto& r : records) {
    if (const auto* n = std::get_if<NeuronTarget>(&r.target)) {
      out << "neuron," << n->layer << ',' << n->index << ",,";
    } else {
      out << "attribute,,," << csv_field(std::get<AttributeTarget>(r.target).name) << ',';
    }
    out << detail::format_double(r.baseline) << ',' << detail::format_double(r.aie) << ','
        << detail::format_double(ace(r)) << ',' << (r.responsible() ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string stats_to_json(const ResponsibilityStats& stats) {
  nlohmann::json j;
  j["format_version"] = kAnalysisFormatVersion;
  j["baseline"] = stats.baseline;
  j["p_f"] = stats.p_f;
  j["p_n"] = stats.p_n;
  j["cv_f"] = stats.cv_f ? nlohmann::json(*stats.cv_f) : nlohmann::json(nullptr);
  j["cv_n"] = stats.cv_n ? nlohmann::json(*stats.cv_n) : nlohmann::json(nullptr);
  j["attribute_count"] = stats.attribute_count;
  j["neuron_count"] = stats.neuron_count;
  j["responsible_attributes"] = stats.responsible_attributes;
  nlohmann::json neurons = nlohmann::json::array();
  for (const auto& n : stats.responsible_neurons) neurons.push_back({n.layer, n.index});
  j["responsible_neurons"] = std::move(neurons);
  return j.dump(2);
}

ResponsibilityStats stats_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ResponsibilityStats s;
    s.baseline = j.at("baseline").get<double>();
    s.p_f = j.at("p_f").get<double>();
    s.p_n = j.at("p_n").get<double>();
    if (!j.at("cv_f").is_null()) s.cv_f = j["cv_f"].get<double>();
    if (!j.at("cv_n").is_null()) s.cv_n = j["cv_n"].get<double>();
    s.attribute_count = j.value("attribute_count", std::size_t{0});
    s.neuron_count = j.value("neuron_count", std::size_t{0});
    if (j.contains("responsible_attributes")) {
      s.responsible_attributes = j["responsible_attributes"].get<std::vector<std::string>>();
    }
    if (j.contains("responsible_neurons")) {
      for (const auto& n : j["responsible_neurons"]) {
        s.responsible_neurons.push_back({n.at(0).get<std::size_t>(), n.at(1).get<std::size_t>()});
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed stats file: ") + e.what());
  }
}

}  // namespace fairlens
