#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fairlens {

enum class AttributeKind { kCategorical, kContinuous };

// One input column. Categorical values are stored as their index into
// `categories`; continuous values are stored raw.
struct Attribute {
  std::string name;
  AttributeKind kind = AttributeKind::kContinuous;
  std::vector<std::string> categories;
  std::optional<double> min;
  std::optional<double> max;

  bool is_categorical() const { return kind == AttributeKind::kCategorical; }
  bool in_domain(double value) const;
};

enum class Group : std::uint8_t { kUnprivileged = 0, kPrivileged = 1 };

enum class Comparison { kGreater, kGreaterEqual, kLess, kLessEqual };

// Splits one protected attribute's domain into a privileged and an
// unprivileged group. Each group also carries one representative value that
// is substituted when building counterfactual (protected-variant) rows.
class PrivilegedPredicate {
 public:
  static PrivilegedPredicate categories(std::vector<std::size_t> privileged_codes,
                                        double privileged_representative,
                                        double unprivileged_representative);
  static PrivilegedPredicate threshold(Comparison op, double threshold,
                                       double privileged_representative,
                                       double unprivileged_representative);

  bool is_privileged(double value) const;
  Group group_of(double value) const {
    return is_privileged(value) ? Group::kPrivileged : Group::kUnprivileged;
  }
  double representative(Group group) const {
    return group == Group::kPrivileged ? privileged_rep_ : unprivileged_rep_;
  }

  bool is_threshold() const { return is_threshold_; }
  const std::vector<std::size_t>& privileged_codes() const { return codes_; }
  Comparison op() const { return op_; }
  double threshold_value() const { return threshold_; }

 private:
  bool is_threshold_ = false;
  std::vector<std::size_t> codes_;
  Comparison op_ = Comparison::kGreater;
  double threshold_ = 0.0;
  double privileged_rep_ = 0.0;
  double unprivileged_rep_ = 0.0;
};

// Attribute indices of a protected-attribute set F, in schema order.
using ProtectedSet = std::vector<std::size_t>;

class Schema {
 public:
  struct ProtectedEntry {
    std::string name;
    PrivilegedPredicate predicate;
  };

  // Validates every invariant and throws SchemaError on violation.
  Schema(std::vector<Attribute> attributes, std::string label_name,
         std::array<std::string, 2> label_values, int favorable_label,
         std::vector<ProtectedEntry> protected_attributes);

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t width() const { return attributes_.size(); }
  const Attribute& attribute(std::size_t index) const { return attributes_.at(index); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  const std::string& label_name() const { return label_name_; }
  const std::array<std::string, 2>& label_values() const { return label_values_; }
  int favorable_label() const { return favorable_label_; }

  // All protected attributes declared by the schema.
  const ProtectedSet& protected_set() const { return protected_; }
  bool is_protected(std::size_t index) const;
  const PrivilegedPredicate& predicate(std::size_t index) const;

  // Resolves a list of names to a protected set; every name must be a
  // declared protected attribute. An empty list selects all of them.
  ProtectedSet resolve_protected(const std::vector<std::string>& names) const;

  // Stable hex digest of the canonical schema text.
  std::string fingerprint() const;

 private:
  std::vector<Attribute> attributes_;
  std::string label_name_;
  std::array<std::string, 2> label_values_;
  int favorable_label_;
  ProtectedSet protected_;
  std::vector<std::optional<PrivilegedPredicate>> predicates_;
};

Schema parse_schema(std::string_view json_text);
Schema load_schema(const std::filesystem::path& path);
std::string schema_to_json(const Schema& schema);

// Immutable table of validated rows. Values are row-major; categorical
// cells hold the category index.
class Dataset {
 public:
  Dataset(std::shared_ptr<const Schema> schema, std::vector<double> values,
          std::vector<int> labels, std::vector<double> weights = {},
          std::size_t dropped_rows = 0);

  const Schema& schema() const { return *schema_; }
  const std::shared_ptr<const Schema>& schema_ptr() const { return schema_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t width() const { return schema_->width(); }
  bool empty() const { return labels_.empty(); }

  double value(std::size_t row, std::size_t column) const {
    return values_[row * width() + column];
  }
  std::span<const double> row(std::size_t index) const {
    return {values_.data() + index * width(), width()};
  }
  std::span<const double> values() const { return values_; }
  std::span<const int> labels() const { return labels_; }
  int label(std::size_t row) const { return labels_[row]; }
  std::span<const double> weights() const { return weights_; }
  std::size_t dropped_rows() const { return dropped_rows_; }

  std::vector<double> column(std::size_t index) const;

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_weights(std::vector<double> weights) const;
  Dataset with_values(std::vector<double> values) const;

 private:
  std::shared_ptr<const Schema> schema_;
  std::vector<double> values_;
  std::vector<int> labels_;
  std::vector<double> weights_;
  std::size_t dropped_rows_ = 0;
};

// Rows with a missing cell ("", "?", "NA") are dropped and counted.
Dataset load_csv(const std::filesystem::path& path, std::shared_ptr<const Schema> schema);
Dataset parse_csv(std::string_view text, std::shared_ptr<const Schema> schema);
void write_csv(const std::filesystem::path& path, const Dataset& data);

// Deterministic shuffled partition; the train part gets
// round(train_fraction * size) rows. Row order inside each part follows
// the original order.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                  std::uint64_t seed);

// Min-max scaling of one column. Constant columns map to 0.
struct ColumnScale {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;

  double scale(double value) const {
    return constant ? 0.0 : (value - min) / (max - min);
  }
  double unscale(double code) const { return constant ? min : min + code * (max - min); }
};

class Encoding {
 public:
  Encoding() = default;
  explicit Encoding(std::vector<ColumnScale> columns) : columns_(std::move(columns)) {}

  // Categorical columns scale over the declared category codes; continuous
  // columns over the declared domain when present, else the observed range.
  static Encoding fit(const Dataset& data);

  std::size_t width() const { return columns_.size(); }
  const ColumnScale& column(std::size_t index) const { return columns_.at(index); }
  const std::vector<ColumnScale>& columns() const { return columns_; }

  double encode(std::size_t column, double value) const { return columns_.at(column).scale(value); }
  double decode(std::size_t column, double code) const { return columns_.at(column).unscale(code); }

 private:
  std::vector<ColumnScale> columns_;
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncodedMatrix {
  Matrix features;
  std::vector<int> labels;
  std::vector<double> weights;
  std::vector<std::string> column_names;
  Encoding encoding;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
};

EncodedMatrix encode(const Dataset& data);
EncodedMatrix encode(const Dataset& data, const Encoding& encoding);
// Inverse of encode for one cell; categorical codes are rounded to the
// nearest category index.
double decode_value(const Schema& schema, const Encoding& encoding, std::size_t column,
                    double code);

struct ProtectedValuation {
  std::vector<std::pair<std::size_t, Group>> assignments;

  std::string describe(const Schema& schema) const;
  bool matches(std::span<const double> row, const Schema& schema) const;
};

// Cartesian product of the binarized groups of every attribute in F;
// 2^|F| entries. Throws ConfigError for an empty F.
std::vector<ProtectedValuation> valuations(const Schema& schema, const ProtectedSet& protected_set);
std::vector<ProtectedValuation> valuations(const Schema& schema);

std::vector<bool> group_mask(const Dataset& data, const ProtectedValuation& valuation);
// True for rows whose value of `attribute` is privileged.
std::vector<bool> privileged_mask(const Dataset& data, std::size_t attribute);
// True for rows privileged on every attribute of F.
std::vector<bool> privileged_mask(const Dataset& data, const ProtectedSet& protected_set);
// Index of the valuation each row belongs to.
std::vector<std::size_t> valuation_index(const Dataset& data,
                                         const std::vector<ProtectedValuation>& all);

// Synthetic fixture: one binary protected attribute `group` (privileged =
// "majority"), four continuous attributes x1..x4, and a three-level
// categorical `level`. With probability `bias` a row's label is set to its
// privileged flag; otherwise it is drawn from a logistic function of the
// non-protected attributes. The expected favorable-rate gap is `bias`.
Dataset synth_generate(std::size_t rows, double bias, std::uint64_t seed);
std::shared_ptr<const Schema> synth_schema();

}  // namespace fairlens
