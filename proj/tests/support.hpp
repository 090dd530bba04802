#pragma once

// Fixtures and independent reference implementations shared by the unit
// and acceptance tests. The references use plain loops over std::vector and
// never call into the library's forward pass, encoding or metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fairlens/causality.hpp"
#include "fairlens/dataset.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/model.hpp"

namespace fairlens::testing {

// gender (protected, Male privileged), race (protected, White privileged),
// score (continuous on [0, 10]) and tier (3 categories).
inline std::shared_ptr<const Schema> tiny_schema() {
  std::vector<Attribute> attributes{
      {"gender", AttributeKind::kCategorical, {"Female", "Male"}, {}, {}},
      {"race", AttributeKind::kCategorical, {"Black", "White"}, {}, {}},
      {"score", AttributeKind::kContinuous, {}, 0.0, 10.0},
      {"tier", AttributeKind::kCategorical, {"low", "mid", "high"}, {}, {}},
  };
  std::vector<Schema::ProtectedEntry> prot;
  prot.push_back({"gender", PrivilegedPredicate::categories({1}, 1.0, 0.0)});
  prot.push_back({"race", PrivilegedPredicate::categories({1}, 1.0, 0.0)});
  return std::make_shared<const Schema>(std::move(attributes), "label",
                                        std::array<std::string, 2>{"no", "yes"}, 1, std::move(prot));
}

// Random rows over tiny_schema() in which every protected valuation occurs.
inline Dataset tiny_dataset(std::size_t rows, std::mt19937_64& rng) {
  auto schema = tiny_schema();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t r = 0; r < rows; ++r) {
    const double gender = r < 4 ? static_cast<double>(r & 1) : std::floor(unit(rng) * 2.0);
    const double race = r < 4 ? static_cast<double>((r >> 1) & 1) : std::floor(unit(rng) * 2.0);
    values.insert(values.end(), {gender, race, 10.0 * unit(rng), std::floor(unit(rng) * 3.0)});
    labels.push_back(unit(rng) < 0.5 ? 1 : 0);
  }
  return Dataset(std::move(schema), std::move(values), std::move(labels));
}

inline Mlp random_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::mt19937_64& rng,
                      double scale = 1.5) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<DenseLayer> layers;
  std::size_t fan_in = inputs;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(2);
  for (std::size_t w : widths) {
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(fan_in));
    l.bias.resize(static_cast<Eigen::Index>(w));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = normal(rng);
      l.bias(r) = 0.5 * normal(rng);
    }
    layers.push_back(std::move(l));
    fan_in = w;
  }
  return Mlp(std::move(layers));
}

// --- Scalar reference forward pass -----------------------------------------

struct ScalarClamp {
  bool active = false;
  std::size_t layer = 0;  // hidden layer
  std::size_t index = 0;
  double value = 0.0;
};

// Hidden post-activations of one row, layer by layer, then the two
// probabilities as the last entry.
inline std::vector<std::vector<double>> scalar_forward(const Mlp& model, const std::vector<double>& input,
                                                       const ScalarClamp& clamp = {}) {
  std::vector<std::vector<double>> out;
  std::vector<double> a = input;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = layers[l].weights;
    std::vector<double> z(static_cast<std::size_t>(W.rows()));
    for (std::size_t i = 0; i < z.size(); ++i) {
      double s = layers[l].bias(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < a.size(); ++j) {
        s += W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * a[j];
      }
      z[i] = s;
    }
    if (l + 1 == layers.size()) {
      const double m = std::max(z[0], z[1]);
      const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
      out.push_back({e0 / (e0 + e1), e1 / (e0 + e1)});
    } else {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      if (clamp.active && clamp.layer == l) z[clamp.index] = clamp.value;
      out.push_back(z);
      a = z;
    }
  }
  return out;
}

inline int scalar_predict(const Mlp& model, const std::vector<double>& input, const ScalarClamp& clamp = {}) {
  const auto p = scalar_forward(model, input, clamp).back();
  return p[1] > p[0] ? 1 : 0;
}

// --- Reference encoding ----------------------------------------------------

inline double ref_encode(const Schema& schema, const Dataset& fit_on, std::size_t column, double raw) {
  const Attribute& a = schema.attribute(column);
  double lo, hi;
  if (a.kind == AttributeKind::kCategorical) {
    lo = 0.0;
    hi = static_cast<double>(a.categories.size() - 1);
  } else if (a.min && a.max) {
    lo = *a.min;
    hi = *a.max;
  } else {
    lo = hi = fit_on.value(0, column);
    for (std::size_t r = 0; r < fit_on.size(); ++r) {
      lo = std::min(lo, fit_on.value(r, column));
      hi = std::max(hi, fit_on.value(r, column));
    }
  }
  return hi > lo ? (raw - lo) / (hi - lo) : 0.0;
}

inline std::vector<double> ref_row(const Dataset& data, const Dataset& fit_on, std::size_t r) {
  std::vector<double> x(data.width());
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = ref_encode(data.schema(), fit_on, c, data.value(r, c));
  return x;
}

// --- Reference metrics -----------------------------------------------------

inline bool ref_privileged(const Schema& schema, std::size_t attr, double raw) {
  return schema.predicate(attr).is_privileged(raw);
}

inline double ref_spd(const Dataset& data, std::size_t attr, const std::vector<int>& preds) {
  double n[2] = {0, 0}, fav[2] = {0, 0};
  for (std::size_t r = 0; r < data.size(); ++r) {
    const int g = ref_privileged(data.schema(), attr, data.value(r, attr)) ? 1 : 0;
    n[g] += 1;
    fav[g] += preds[r] == data.schema().favorable_label();
  }
  return std::abs(fav[0] / n[0] - fav[1] / n[1]);
}

inline double ref_gds(const Dataset& data, const ProtectedSet& F, const std::vector<int>& preds) {
  std::map<std::vector<int>, std::pair<double, double>> groups;
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::vector<int> key;
    for (std::size_t f : F) key.push_back(ref_privileged(data.schema(), f, data.value(r, f)) ? 1 : 0);
    auto& [n, fav] = groups[key];
    n += 1;
    fav += preds[r] == data.schema().favorable_label();
  }
  double lo = 1.0, hi = 0.0;
  for (const auto& [key, nf] : groups) {
    lo = std::min(lo, nf.second / nf.first);
    hi = std::max(hi, nf.second / nf.first);
  }
  return hi - lo;
}

// Enumerates every protected variant of every row by raw-value substitution
// and re-encoding.
inline double ref_cds(const Mlp& model, const Dataset& data, const Dataset& fit_on, const ProtectedSet& F,
                      const ScalarClamp& clamp = {}, std::optional<std::pair<std::size_t, double>> input_clamp = {}) {
  const Schema& schema = data.schema();
  std::size_t flagged = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto x = ref_row(data, fit_on, r);
    if (input_clamp) x[input_clamp->first] = input_clamp->second;
    const int base = scalar_predict(model, x, clamp);
    bool found = false;
    for (std::size_t mask = 0; mask < (std::size_t{1} << F.size()) && !found; ++mask) {
      auto v = x;
      for (std::size_t k = 0; k < F.size(); ++k) {
        const bool priv = (mask >> (F.size() - 1 - k)) & 1;
        const double raw = schema.predicate(F[k]).representative(priv ? Group::kPrivileged : Group::kUnprivileged);
        v[F[k]] = ref_encode(schema, fit_on, F[k], raw);
      }
      // The intervention fixes the model input, variants included.
      if (input_clamp) v[input_clamp->first] = input_clamp->second;
      found = scalar_predict(model, v, clamp) != base;
    }
    flagged += found;
  }
  return static_cast<double>(flagged) / static_cast<double>(data.size());
}

inline double ref_metric(const Mlp& model, const Dataset& data, const Dataset& fit_on, const FairnessMetric& metric,
                         const ScalarClamp& clamp = {},
                         std::optional<std::pair<std::size_t, double>> input_clamp = {}) {
  if (metric.kind == MetricKind::kCds) return ref_cds(model, data, fit_on, metric.protected_set, clamp, input_clamp);
  std::vector<int> preds;
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto x = ref_row(data, fit_on, r);
    if (input_clamp) x[input_clamp->first] = input_clamp->second;
    preds.push_back(scalar_predict(model, x, clamp));
  }
  if (metric.kind == MetricKind::kSpd) return ref_spd(data, metric.protected_set.front(), preds);
  return ref_gds(data, metric.protected_set, preds);
}

inline std::vector<double> ref_grid(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  return v;
}

inline double ref_aie_neuron(const Mlp& model, const Dataset& data, const FairnessMetric& metric,
                             NeuronTarget target, std::size_t num_interval) {
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const double a = scalar_forward(model, ref_row(data, data, r))[target.layer][target.index];
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  double sum = 0.0;
  const auto grid = ref_grid(lo, hi, num_interval);
  for (double alpha : grid) {
    sum += ref_metric(model, data, data, metric, ScalarClamp{true, target.layer, target.index, alpha});
  }
  return sum / static_cast<double>(grid.size());
}

inline double ref_aie_attribute(const Mlp& model, const Dataset& data, const FairnessMetric& metric,
                                std::size_t column, std::size_t num_interval) {
  const Schema& schema = data.schema();
  std::vector<double> raw;
  if (schema.attribute(column).kind == AttributeKind::kCategorical) {
    std::set<double> seen;
    for (std::size_t r = 0; r < data.size(); ++r) seen.insert(data.value(r, column));
    raw.assign(seen.begin(), seen.end());
  } else {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < data.size(); ++r) {
      lo = std::min(lo, data.value(r, column));
      hi = std::max(hi, data.value(r, column));
    }
    raw = ref_grid(lo, hi, num_interval);
  }
  double sum = 0.0;
  for (double v : raw) {
    sum += ref_metric(model, data, data, metric, {}, std::make_pair(column, ref_encode(schema, data, column, v)));
  }
  return sum / static_cast<double>(raw.size());
}

}  // namespace fairlens::testing
