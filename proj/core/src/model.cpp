#include "fairlens/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fairlens/error.hpp"
#include "util.hpp"

namespace fairlens {

using nlohmann::json;

std::string describe(const Target& target) {
  if (const auto* a = std::get_if<AttributeTarget>(&target)) return "attribute:" + a->name;
  const auto& n = std::get<NeuronTarget>(target);
  return "neuron:" + std::to_string(n.layer) + ":" + std::to_string(n.index);
}

Overlay resolve(const Intervention& intervention, const Schema& schema, const Encoding& encoding) {
  if (const auto* a = std::get_if<AttributeTarget>(&intervention.target)) {
    const std::size_t column = schema.index_of(a->name);
    if (!schema.attribute(column).in_domain(intervention.value)) {
      throw ConfigError("intervention value outside the domain of '" + a->name + "'");
    }
    return InputClamp{column, encoding.encode(column, intervention.value)};
  }
  return NeuronClamp{std::get<NeuronTarget>(intervention.target), intervention.value};
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.size() < 2) throw FormatError("model needs at least one hidden layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw FormatError("layer " + std::to_string(i) + " is empty");
    }
    if (l.bias.size() != l.weights.rows()) {
      throw FormatError("layer " + std::to_string(i) + ": bias size does not match outputs");
    }
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw FormatError("layer " + std::to_string(i) + ": input width " +
                        std::to_string(l.weights.cols()) + " does not match previous output " +
                        std::to_string(layers_[i - 1].weights.rows()));
    }
  }
  if (layers_.back().weights.rows() != 2) throw FormatError("output layer must have 2 units");
}

Mlp Mlp::initialize(std::size_t inputs, std::span<const std::size_t> hidden, std::uint64_t seed) {
  if (inputs == 0) throw ConfigError("model needs at least one input");
  if (hidden.empty()) throw ConfigError("model needs at least one hidden layer");
  detail::Rng rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t fan_in = inputs;
  std::vector<std::size_t> widths(hidden.begin(), hidden.end());
  widths.push_back(2);
  for (std::size_t width : widths) {
    if (width == 0) throw ConfigError("hidden layer of width 0");
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(fan_in));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-limit, limit);
    }
    l.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
    layers.push_back(std::move(l));
    fan_in = width;
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::hidden_neuron_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < hidden_layer_count(); ++i) n += hidden_width(i);
  return n;
}

std::vector<std::size_t> Mlp::hidden_sizes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hidden_layer_count(); ++i) out.push_back(hidden_width(i));
  return out;
}

std::vector<NeuronTarget> Mlp::hidden_neurons() const {
  std::vector<NeuronTarget> out;
  for (std::size_t l = 0; l < hidden_layer_count(); ++l) {
    for (std::size_t j = 0; j < hidden_width(l); ++j) out.push_back({l, j});
  }
  return out;
}

void Mlp::check(const Overlay& overlay) const {
  if (const auto* in = std::get_if<InputClamp>(&overlay)) {
    if (in->column >= input_width()) {
      throw ConfigError("input intervention on column " + std::to_string(in->column) +
                        " out of range");
    }
    return;
  }
  const auto& n = std::get<NeuronClamp>(overlay).neuron;
  if (n.layer >= hidden_layer_count() || n.index >= hidden_width(n.layer)) {
    throw ConfigError("neuron intervention on " + describe(Target{n}) + " out of range");
  }
}

// ---------------------------------------------------------------------------
// Forward

namespace {

Matrix affine(const DenseLayer& layer, const Matrix& input) {
  Matrix z = input * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      z(r, c) = std::exp(z(r, c) - m);
      sum += z(r, c);
    }
    z.row(r) /= sum;
  }
}

void check_batch(const Mlp& model, const Matrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != model.input_width()) {
    throw ConfigError("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                      std::to_string(model.input_width()));
  }
}

}  // namespace

ForwardTrace trace(const Mlp& model, const Matrix& batch, const std::optional<Overlay>& overlay) {
  check_batch(model, batch);
  if (overlay) model.check(*overlay);
  const auto& layers = model.layers();
  ForwardTrace t;
  t.hidden.reserve(model.hidden_layer_count());

  const Matrix* input = &batch;
  Matrix clamped;
  if (overlay) {
    if (const auto* in = std::get_if<InputClamp>(&*overlay)) {
      clamped = batch;
      clamped.col(static_cast<Eigen::Index>(in->column)).setConstant(in->value);
      input = &clamped;
    }
  }
  const NeuronClamp* neuron = overlay ? std::get_if<NeuronClamp>(&*overlay) : nullptr;

  for (std::size_t i = 0; i < model.hidden_layer_count(); ++i) {
    Matrix a = affine(layers[i], i == 0 ? *input : t.hidden.back()).cwiseMax(0.0);
    if (neuron && neuron->neuron.layer == i) {
      a.col(static_cast<Eigen::Index>(neuron->neuron.index)).setConstant(neuron->value);
    }
    t.hidden.push_back(std::move(a));
  }
  t.probabilities = affine(layers.back(), t.hidden.back());
  softmax_rows(t.probabilities);
  return t;
}

Matrix forward(const Mlp& model, const Matrix& batch, const std::optional<Overlay>& overlay) {
  return trace(model, batch, overlay).probabilities;
}

Matrix propagate_from(const Mlp& model, std::size_t layer, const Matrix& activations) {
  if (layer >= model.hidden_layer_count()) throw ConfigError("propagate_from: layer out of range");
  return propagate_preactivation(model, layer + 1, affine(model.layers()[layer + 1], activations));
}

Matrix propagate_preactivation(const Mlp& model, std::size_t layer, Matrix preactivation) {
  const auto& layers = model.layers();
  if (layer >= layers.size()) throw ConfigError("propagate_preactivation: layer out of range");
  Matrix z = std::move(preactivation);
  for (std::size_t i = layer; i + 1 < layers.size(); ++i) z = affine(layers[i + 1], z.cwiseMax(0.0));
  softmax_rows(z);
  return z;
}

std::vector<int> argmax(const Matrix& probabilities) {
  std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = probabilities(r, 1) > probabilities(r, 0) ? 1 : 0;
  }
  return out;
}

std::vector<int> predict(const Mlp& model, const Matrix& batch, const std::optional<Overlay>& overlay) {
  return argmax(forward(model, batch, overlay));
}

std::pair<double, double> neuron_range(const Mlp& model, const Matrix& batch, NeuronTarget target) {
  model.check(NeuronClamp{target, 0.0});
  if (batch.rows() == 0) throw ConfigError("neuron_range on an empty batch");
  const auto t = trace(model, batch);
  const auto col = t.hidden[target.layer].col(static_cast<Eigen::Index>(target.index));
  return {col.minCoeff(), col.maxCoeff()};
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(fairness_penalty >= 0.0)) throw ConfigError("fairness penalty must be non-negative");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  if (favorable_label != 0 && favorable_label != 1) throw ConfigError("favorable_label must be 0 or 1");
}

LossTerms loss_and_gradient(const std::vector<DenseLayer>& layers, const Matrix& batch,
                            std::span<const int> labels, std::span<const double> weights,
                            const std::vector<bool>& privileged, double penalty,
                            int favorable_label, std::vector<DenseLayer>* gradient) {
  const Eigen::Index n = batch.rows();
  const std::size_t hidden_count = layers.size() - 1;

  std::vector<Matrix> pre(layers.size());
  std::vector<Matrix> act(hidden_count);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    pre[i] = affine(layers[i], i == 0 ? batch : act[i - 1]);
    if (i < hidden_count) act[i] = pre[i].cwiseMax(0.0);
  }
  Matrix prob = pre.back();
  softmax_rows(prob);

  LossTerms loss;
  double weight_sum = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) weight_sum += weights[static_cast<std::size_t>(r)];
  Matrix dz = Matrix::Zero(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<std::size_t>(r);
    const int y = labels[i];
    const double m = pre.back().row(r).maxCoeff();
    const double lse = m + std::log(std::exp(pre.back()(r, 0) - m) + std::exp(pre.back()(r, 1) - m));
    loss.cross_entropy += weights[i] * (lse - pre.back()(r, y));
    const double scale = weights[i] / weight_sum;
    dz(r, 0) = scale * (prob(r, 0) - (y == 0 ? 1.0 : 0.0));
    dz(r, 1) = scale * (prob(r, 1) - (y == 1 ? 1.0 : 0.0));
  }
  loss.cross_entropy /= weight_sum;

  if (penalty > 0.0 && !privileged.empty()) {
    const auto l = static_cast<Eigen::Index>(favorable_label);
    double sum_priv = 0.0, sum_unpriv = 0.0;
    std::size_t n_priv = 0, n_unpriv = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (privileged[static_cast<std::size_t>(r)]) {
        sum_priv += prob(r, l);
        ++n_priv;
      } else {
        sum_unpriv += prob(r, l);
        ++n_unpriv;
      }
    }
    if (n_priv > 0 && n_unpriv > 0) {
      const double gap = sum_priv / static_cast<double>(n_priv) - sum_unpriv / static_cast<double>(n_unpriv);
      loss.penalty = penalty * std::abs(gap);
      const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
      for (Eigen::Index r = 0; r < n; ++r) {
        const bool p = privileged[static_cast<std::size_t>(r)];
        // d penalty / d P(favorable) for this row.
        const double g = penalty * sign *
                         (p ? 1.0 / static_cast<double>(n_priv) : -1.0 / static_cast<double>(n_unpriv));
        const double pl = prob(r, l);
        for (Eigen::Index k = 0; k < 2; ++k) {
          dz(r, k) += g * pl * ((k == l ? 1.0 : 0.0) - prob(r, k));
        }
      }
    }
  }

  if (gradient) {
    gradient->resize(layers.size());
    Matrix delta = std::move(dz);
    for (std::size_t i = layers.size(); i-- > 0;) {
      const Matrix& input = i == 0 ? batch : act[i - 1];
      (*gradient)[i].weights = delta.transpose() * input;
      (*gradient)[i].bias = delta.colwise().sum().transpose();
      if (i > 0) {
        Matrix back = delta * layers[i].weights;
        delta = back.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
      }
    }
  }
  return loss;
}

Mlp train(const EncodedMatrix& data, const TrainConfig& config, const std::vector<bool>& privileged) {
  config.validate();
  if (data.rows() == 0) throw ConfigError("cannot train on an empty dataset");
  if (config.fairness_penalty > 0.0 && privileged.size() != data.rows()) {
    throw ConfigError("fairness penalty needs a privileged-group mask covering every row");
  }

  std::vector<DenseLayer> layers =
      Mlp::initialize(data.cols(), config.hidden, config.seed).layers();

  struct Moments {
    Eigen::MatrixXd mw, vw;
    Eigen::VectorXd mb, vb;
  };
  std::vector<Moments> moments;
  for (const auto& l : layers) {
    moments.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                       Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                       Eigen::VectorXd::Zero(l.bias.size()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  detail::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::vector<double> unit(data.rows(), 1.0);
  const std::vector<double>& weights = config.use_sample_weights ? data.weights : unit;
  const bool penalized = config.fairness_penalty > 0.0;

  std::vector<DenseLayer> grad;
  Matrix batch;
  std::vector<int> batch_labels;
  std::vector<double> batch_weights;
  std::vector<bool> batch_priv;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - start);
      batch.resize(rows, static_cast<Eigen::Index>(data.cols()));
      batch_labels.resize(end - start);
      batch_weights.resize(end - start);
      batch_priv.assign(penalized ? end - start : 0, false);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t src = order[k];
        batch.row(static_cast<Eigen::Index>(k - start)) = data.features.row(static_cast<Eigen::Index>(src));
        batch_labels[k - start] = data.labels[src];
        batch_weights[k - start] = weights[src];
        if (penalized) batch_priv[k - start] = privileged[src];
      }
      const LossTerms loss = loss_and_gradient(layers, batch, batch_labels, batch_weights, batch_priv,
                                               config.fairness_penalty, config.favorable_label, &grad);
      if (!std::isfinite(loss.total())) {
        throw TrainingError("training diverged: loss is not finite in epoch " + std::to_string(epoch),
                            epoch);
      }
      epoch_loss += loss.total();

      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < layers.size(); ++i) {
        Moments& m = moments[i];
        m.mw = kBeta1 * m.mw + (1.0 - kBeta1) * grad[i].weights;
        m.vw = kBeta2 * m.vw + (1.0 - kBeta2) * grad[i].weights.cwiseAbs2();
        m.mb = kBeta1 * m.mb + (1.0 - kBeta1) * grad[i].bias;
        m.vb = kBeta2 * m.vb + (1.0 - kBeta2) * grad[i].bias.cwiseAbs2();
        layers[i].weights.array() -=
            config.learning_rate * (m.mw.array() / c1) / ((m.vw.array() / c2).sqrt() + kEps);
        layers[i].bias.array() -=
            config.learning_rate * (m.mb.array() / c1) / ((m.vb.array() / c2).sqrt() + kEps);
      }
    }
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch), epoch);
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].weights.allFinite() || !layers[i].bias.allFinite()) {
      throw TrainingError("training produced non-finite weights", config.epochs - 1);
    }
  }
  return Mlp(std::move(layers));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json config_json(const TrainConfig& c) {
  json j{{"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"use_sample_weights", c.use_sample_weights},
         {"fairness_penalty", c.fairness_penalty},
         {"hidden", c.hidden},
         {"favorable_label", c.favorable_label}};
  j["penalty_attribute"] = c.penalty_attribute ? json(*c.penalty_attribute) : json(nullptr);
  return j;
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.use_sample_weights = j.at("use_sample_weights").get<bool>();
  c.fairness_penalty = j.at("fairness_penalty").get<double>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.favorable_label = j.at("favorable_label").get<int>();
  if (!j.at("penalty_attribute").is_null()) c.penalty_attribute = j["penalty_attribute"].get<std::string>();
  return c;
}

}  // namespace

std::string model_to_json(const ModelFile& file) {
  json layers = json::array();
  for (const auto& l : file.model.layers()) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weights.cols()));
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weights(r, c);
      rows.push_back(std::move(row));
    }
    std::vector<double> bias(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weights", std::move(rows)}, {"bias", std::move(bias)}});
  }
  json norm = json::array();
  for (const auto& c : file.encoding.columns()) {
    norm.push_back({{"min", c.min}, {"max", c.max}, {"constant", c.constant}});
  }
  json j{{"format_version", kModelFormatVersion},
         {"kind", "fairlens-mlp"},
         {"architecture",
          {{"inputs", file.model.input_width()},
           {"hidden", file.model.hidden_sizes()},
           {"outputs", 2},
           {"hidden_activation", "relu"},
           {"output_activation", "softmax"}}},
         {"layers", std::move(layers)},
         {"schema_fingerprint", file.schema_fingerprint},
         {"norm_params", std::move(norm)},
         {"train_config", config_json(file.config)},
         {"split", {{"train_fraction", file.train_fraction}, {"seed", file.split_seed}}}};
  return j.dump(1);
}

ModelFile model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version > kModelFormatVersion) {
      throw FormatError("model format version " + std::to_string(version) + " is newer than supported");
    }
    std::vector<DenseLayer> layers;
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("weights").get<std::vector<std::vector<double>>>();
      const auto bias = lj.at("bias").get<std::vector<double>>();
      if (rows.empty()) throw FormatError("layer with no weights");
      DenseLayer l;
      l.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw FormatError("ragged weight matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
          l.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      l.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
      layers.push_back(std::move(l));
    }
    ModelFile file{Mlp(std::move(layers)), j.at("schema_fingerprint").get<std::string>(), {}, {}, 0.7, 0};
    const auto& arch = j.at("architecture");
    if (arch.at("hidden").get<std::vector<std::size_t>>() != file.model.hidden_sizes() ||
        arch.at("inputs").get<std::size_t>() != file.model.input_width()) {
      throw FormatError("declared architecture does not match layer dimensions");
    }
    std::vector<ColumnScale> norm;
    for (const auto& nj : j.at("norm_params")) {
      norm.push_back({nj.at("min").get<double>(), nj.at("max").get<double>(), nj.at("constant").get<bool>()});
    }
    if (norm.size() != file.model.input_width()) {
      throw FormatError("norm_params width does not match model inputs");
    }
    file.encoding = Encoding(std::move(norm));
    file.config = config_from(j.at("train_config"));
    file.train_fraction = j.at("split").at("train_fraction").get<double>();
    file.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    return file;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(file) << '\n';
}

ModelFile load_model(const std::filesystem::path& path) {
  return model_from_json(detail::read_file(path));
}

}  // namespace fairlens
