#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fairlens/dataset.hpp"

namespace fairlens {

// Hidden neuron `index` of hidden layer `layer` (both zero-based).
struct NeuronTarget {
  std::size_t layer = 0;
  std::size_t index = 0;
  auto operator<=>(const NeuronTarget&) const = default;
};

struct AttributeTarget {
  std::string name;
  auto operator<=>(const AttributeTarget&) const = default;
};

using Target = std::variant<AttributeTarget, NeuronTarget>;

std::string describe(const Target& target);

// do(target = value). Attribute values are in raw attribute space (category
// index for categorical attributes); neuron values are post-activation.
struct Intervention {
  Target target;
  double value = 0.0;
};

// Encoded overlays applied by the forward pass. An input clamp replaces one
// encoded input column before the first layer; a neuron clamp replaces the
// rectified output of one hidden neuron for every sample.
struct InputClamp {
  std::size_t column = 0;
  double value = 0.0;
};
struct NeuronClamp {
  NeuronTarget neuron;
  double value = 0.0;
};
using Overlay = std::variant<InputClamp, NeuronClamp>;

Overlay resolve(const Intervention& intervention, const Schema& schema, const Encoding& encoding);

struct DenseLayer {
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;
};

inline const std::vector<std::size_t> kDefaultHidden = {64, 32, 16, 8, 4};

// Feed-forward binary classifier: rectified hidden layers and a two-way
// softmax output.
class Mlp {
 public:
  explicit Mlp(std::vector<DenseLayer> layers);

  // Glorot-uniform weights, zero biases.
  static Mlp initialize(std::size_t inputs, std::span<const std::size_t> hidden,
                        std::uint64_t seed);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t input_width() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }
  std::size_t hidden_layer_count() const { return layers_.size() - 1; }
  std::size_t hidden_width(std::size_t layer) const {
    return static_cast<std::size_t>(layers_.at(layer).weights.rows());
  }
  std::size_t hidden_neuron_count() const;
  std::vector<std::size_t> hidden_sizes() const;
  std::vector<NeuronTarget> hidden_neurons() const;

  void check(const Overlay& overlay) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardTrace {
  std::vector<Matrix> hidden;  // post-activation, one per hidden layer
  Matrix probabilities;        // rows x 2
};

ForwardTrace trace(const Mlp& model, const Matrix& batch, const std::optional<Overlay>& overlay = {});
Matrix forward(const Mlp& model, const Matrix& batch, const std::optional<Overlay>& overlay = {});

// Continues a forward pass from the post-activation output of hidden layer
// `layer` to the output probabilities.
Matrix propagate_from(const Mlp& model, std::size_t layer, const Matrix& activations);
// Same, starting from the pre-activation of `layers()[layer]` (the output
// layer when layer == hidden_layer_count()).
Matrix propagate_preactivation(const Mlp& model, std::size_t layer, Matrix preactivation);

// Row-wise argmax; a tie goes to class 0.
std::vector<int> argmax(const Matrix& probabilities);
std::vector<int> predict(const Mlp& model, const Matrix& batch,
                         const std::optional<Overlay>& overlay = {});

// Exact extrema of one neuron's post-activation value over `batch`.
std::pair<double, double> neuron_range(const Mlp& model, const Matrix& batch, NeuronTarget target);

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool use_sample_weights = false;
  double fairness_penalty = 0.0;
  std::optional<std::string> penalty_attribute;
  std::vector<std::size_t> hidden = kDefaultHidden;
  int favorable_label = 1;

  void validate() const;
};

struct LossTerms {
  double cross_entropy = 0.0;
  double penalty = 0.0;
  double total() const { return cross_entropy + penalty; }
};

// Weighted mean cross-entropy plus
//   penalty * |mean P(favorable | privileged) - mean P(favorable | unprivileged)|.
// The penalty term is zero when either group is absent from the batch.
// Writes d(total)/d(parameters) into `gradient` when it is non-null.
LossTerms loss_and_gradient(const std::vector<DenseLayer>& layers, const Matrix& batch,
                            std::span<const int> labels, std::span<const double> weights,
                            const std::vector<bool>& privileged, double penalty,
                            int favorable_label, std::vector<DenseLayer>* gradient);

// Mini-batch Adam on the loss above. `privileged` is required when the
// config's fairness penalty is positive. Deterministic for a fixed seed.
Mlp train(const EncodedMatrix& data, const TrainConfig& config,
          const std::vector<bool>& privileged = {});

// Everything a model file carries besides the weights.
struct ModelFile {
  Mlp model;
  std::string schema_fingerprint;
  Encoding encoding;
  TrainConfig config;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ModelFile& file);
ModelFile model_from_json(std::string_view text);
void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace fairlens
