#include "fairlens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fairlens/error.hpp"
#include "util.hpp"

namespace fairlens {

using nlohmann::json;

bool Attribute::in_domain(double value) const {
  if (!std::isfinite(value)) return false;
  if (is_categorical()) {
    return value >= 0.0 && value == std::floor(value) &&
           value < static_cast<double>(categories.size());
  }
  if (min && value < *min) return false;
  if (max && value > *max) return false;
  return true;
}

PrivilegedPredicate PrivilegedPredicate::categories(std::vector<std::size_t> privileged_codes,
                                                    double privileged_representative,
                                                    double unprivileged_representative) {
  PrivilegedPredicate p;
  std::sort(privileged_codes.begin(), privileged_codes.end());
  privileged_codes.erase(std::unique(privileged_codes.begin(), privileged_codes.end()),
                         privileged_codes.end());
  p.codes_ = std::move(privileged_codes);
  p.privileged_rep_ = privileged_representative;
  p.unprivileged_rep_ = unprivileged_representative;
  return p;
}

PrivilegedPredicate PrivilegedPredicate::threshold(Comparison op, double threshold,
                                                   double privileged_representative,
                                                   double unprivileged_representative) {
  PrivilegedPredicate p;
  p.is_threshold_ = true;
  p.op_ = op;
  p.threshold_ = threshold;
  p.privileged_rep_ = privileged_representative;
  p.unprivileged_rep_ = unprivileged_representative;
  return p;
}

bool PrivilegedPredicate::is_privileged(double value) const {
  if (!is_threshold_) {
    const auto code = static_cast<std::size_t>(std::llround(value));
    return std::binary_search(codes_.begin(), codes_.end(), code);
  }
  switch (op_) {
    case Comparison::kGreater: return value > threshold_;
    case Comparison::kGreaterEqual: return value >= threshold_;
    case Comparison::kLess: return value < threshold_;
    case Comparison::kLessEqual: return value <= threshold_;
  }
  return false;
}

namespace {

const char* comparison_text(Comparison op) {
  switch (op) {
    case Comparison::kGreater: return ">";
    case Comparison::kGreaterEqual: return ">=";
    case Comparison::kLess: return "<";
    case Comparison::kLessEqual: return "<=";
  }
  return "?";
}

Comparison parse_comparison(const std::string& text) {
  if (text == ">") return Comparison::kGreater;
  if (text == ">=") return Comparison::kGreaterEqual;
  if (text == "<") return Comparison::kLess;
  if (text == "<=") return Comparison::kLessEqual;
  throw SchemaError("unknown comparison operator '" + text + "'");
}

}  // namespace

Schema::Schema(std::vector<Attribute> attributes, std::string label_name,
               std::array<std::string, 2> label_values, int favorable_label,
               std::vector<ProtectedEntry> protected_attributes)
    : attributes_(std::move(attributes)),
      label_name_(std::move(label_name)),
      label_values_(std::move(label_values)),
      favorable_label_(favorable_label),
      predicates_(attributes_.size()) {
  if (attributes_.empty()) throw SchemaError("schema declares no attributes");
  if (label_name_.empty()) throw SchemaError("schema label name is empty");
  if (favorable_label_ != 0 && favorable_label_ != 1) {
    throw SchemaError("favorable_label must be 0 or 1");
  }
  if (label_values_[0] == label_values_[1]) throw SchemaError("label values must differ");

  std::set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw SchemaError("attribute with empty name");
    if (a.name == label_name_) {
      throw SchemaError("attribute '" + a.name + "' collides with the label column");
    }
    if (!names.insert(a.name).second) throw SchemaError("duplicate attribute '" + a.name + "'");
    if (a.is_categorical()) {
      if (a.categories.empty()) {
        throw SchemaError("categorical attribute '" + a.name + "' has an empty domain");
      }
      std::set<std::string> cats(a.categories.begin(), a.categories.end());
      if (cats.size() != a.categories.size()) {
        throw SchemaError("categorical attribute '" + a.name + "' repeats a value");
      }
    } else if (a.min && a.max && *a.min > *a.max) {
      throw SchemaError("continuous attribute '" + a.name + "' has min > max");
    }
  }

  for (auto& entry : protected_attributes) {
    const auto index = find(entry.name);
    if (!index) throw SchemaError("protected attribute '" + entry.name + "' is not an attribute");
    if (predicates_[*index]) throw SchemaError("protected attribute '" + entry.name + "' repeated");
    const Attribute& a = attributes_[*index];
    const PrivilegedPredicate& p = entry.predicate;
    if (p.is_threshold()) {
      if (a.is_categorical()) {
        throw SchemaError("threshold predicate on categorical attribute '" + a.name + "'");
      }
      if (!a.min || !a.max) {
        throw SchemaError("protected continuous attribute '" + a.name +
                          "' needs a declared min and max");
      }
      if (p.is_privileged(*a.min) == p.is_privileged(*a.max)) {
        throw SchemaError("predicate on '" + a.name + "' does not split its domain in two");
      }
    } else {
      if (!a.is_categorical()) {
        throw SchemaError("category predicate on continuous attribute '" + a.name + "'");
      }
      if (p.privileged_codes().empty() ||
          p.privileged_codes().size() >= a.categories.size()) {
        throw SchemaError("predicate on '" + a.name + "' does not split its domain in two");
      }
      if (p.privileged_codes().back() >= a.categories.size()) {
        throw SchemaError("predicate on '" + a.name + "' names an unknown category");
      }
    }
    if (!a.in_domain(p.representative(Group::kPrivileged)) ||
        !a.in_domain(p.representative(Group::kUnprivileged)) ||
        !p.is_privileged(p.representative(Group::kPrivileged)) ||
        p.is_privileged(p.representative(Group::kUnprivileged))) {
      throw SchemaError("group representatives of '" + a.name + "' do not match its predicate");
    }
    predicates_[*index] = std::move(entry.predicate);
    protected_.push_back(*index);
  }
  std::sort(protected_.begin(), protected_.end());
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto index = find(name)) return *index;
  throw SchemaError("unknown attribute '" + std::string(name) + "'");
}

bool Schema::is_protected(std::size_t index) const {
  return index < predicates_.size() && predicates_[index].has_value();
}

const PrivilegedPredicate& Schema::predicate(std::size_t index) const {
  if (!is_protected(index)) {
    throw SchemaError("attribute #" + std::to_string(index) + " is not protected");
  }
  return *predicates_[index];
}

ProtectedSet Schema::resolve_protected(const std::vector<std::string>& names) const {
  if (names.empty()) return protected_;
  ProtectedSet result;
  for (const auto& name : names) {
    const auto index = find(name);
    if (!index) throw ConfigError("unknown protected attribute '" + name + "'");
    if (!is_protected(*index)) throw ConfigError("attribute '" + name + "' is not protected");
    result.push_back(*index);
  }
  std::sort(result.begin(), result.end());
  result.erase(std::unique(result.begin(), result.end()), result.end());
  return result;
}

std::string Schema::fingerprint() const {
  return detail::hex_digest(schema_to_json(*this));
}

namespace {

json schema_json(const Schema& schema) {
  json j;
  j["format_version"] = 1;
  j["label"] = {{"name", schema.label_name()},
                {"values", {schema.label_values()[0], schema.label_values()[1]}}};
  j["favorable_label"] = schema.favorable_label();
  json attrs = json::array();
  for (const auto& a : schema.attributes()) {
    json aj{{"name", a.name}};
    if (a.is_categorical()) {
      aj["kind"] = "categorical";
      aj["values"] = a.categories;
    } else {
      aj["kind"] = "continuous";
      if (a.min) aj["min"] = *a.min;
      if (a.max) aj["max"] = *a.max;
    }
    attrs.push_back(std::move(aj));
  }
  j["attributes"] = std::move(attrs);
  json prot = json::array();
  json priv = json::object();
  for (std::size_t index : schema.protected_set()) {
    const Attribute& a = schema.attribute(index);
    const PrivilegedPredicate& p = schema.predicate(index);
    prot.push_back(a.name);
    json pj;
    if (p.is_threshold()) {
      pj["op"] = comparison_text(p.op());
      pj["threshold"] = p.threshold_value();
      pj["privileged_value"] = p.representative(Group::kPrivileged);
      pj["unprivileged_value"] = p.representative(Group::kUnprivileged);
    } else {
      json values = json::array();
      for (std::size_t code : p.privileged_codes()) values.push_back(a.categories[code]);
      pj["values"] = std::move(values);
      const auto rep = [&](Group g) {
        return a.categories[static_cast<std::size_t>(p.representative(g))];
      };
      pj["privileged_value"] = rep(Group::kPrivileged);
      pj["unprivileged_value"] = rep(Group::kUnprivileged);
    }
    priv[a.name] = std::move(pj);
  }
  j["protected"] = std::move(prot);
  j["privileged"] = std::move(priv);
  return j;
}

std::size_t category_code(const Attribute& a, const std::string& value) {
  const auto it = std::find(a.categories.begin(), a.categories.end(), value);
  if (it == a.categories.end()) {
    throw SchemaError("value '" + value + "' is not in the domain of '" + a.name + "'");
  }
  return static_cast<std::size_t>(it - a.categories.begin());
}

}  // namespace

std::string schema_to_json(const Schema& schema) { return schema_json(schema).dump(2); }

Schema parse_schema(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  try {
    std::vector<Attribute> attributes;
    for (const auto& aj : j.at("attributes")) {
      Attribute a;
      a.name = aj.at("name").get<std::string>();
      const auto kind = aj.at("kind").get<std::string>();
      if (kind == "categorical") {
        a.kind = AttributeKind::kCategorical;
        a.categories = aj.at("values").get<std::vector<std::string>>();
      } else if (kind == "continuous") {
        a.kind = AttributeKind::kContinuous;
        if (aj.contains("min")) a.min = aj["min"].get<double>();
        if (aj.contains("max")) a.max = aj["max"].get<double>();
      } else {
        throw SchemaError("attribute '" + a.name + "' has unknown kind '" + kind + "'");
      }
      attributes.push_back(std::move(a));
    }

    const auto& label = j.at("label");
    const auto label_values = label.at("values").get<std::vector<std::string>>();
    if (label_values.size() != 2) throw SchemaError("label must declare exactly two values");

    std::vector<Schema::ProtectedEntry> entries;
    const auto& priv = j.contains("privileged") ? j["privileged"] : json::object();
    for (const auto& name_json : j.at("protected")) {
      const auto name = name_json.get<std::string>();
      const auto it = std::find_if(attributes.begin(), attributes.end(),
                                   [&](const Attribute& a) { return a.name == name; });
      if (it == attributes.end()) {
        throw SchemaError("protected attribute '" + name + "' is not an attribute");
      }
      if (!priv.contains(name)) {
        throw SchemaError("protected attribute '" + name + "' has no privileged predicate");
      }
      const auto& pj = priv.at(name);
      if (pj.contains("values")) {
        if (!it->is_categorical()) {
          throw SchemaError("category predicate on continuous attribute '" + name + "'");
        }
        std::vector<std::size_t> codes;
        for (const auto& v : pj["values"]) codes.push_back(category_code(*it, v.get<std::string>()));
        std::sort(codes.begin(), codes.end());
        double priv_rep = codes.empty() ? 0.0 : static_cast<double>(codes.front());
        double unpriv_rep = 0.0;
        for (std::size_t c = 0; c < it->categories.size(); ++c) {
          if (!std::binary_search(codes.begin(), codes.end(), c)) {
            unpriv_rep = static_cast<double>(c);
            break;
          }
        }
        if (pj.contains("privileged_value")) {
          priv_rep = static_cast<double>(category_code(*it, pj["privileged_value"].get<std::string>()));
        }
        if (pj.contains("unprivileged_value")) {
          unpriv_rep = static_cast<double>(category_code(*it, pj["unprivileged_value"].get<std::string>()));
        }
        entries.push_back({name, PrivilegedPredicate::categories(codes, priv_rep, unpriv_rep)});
      } else {
        const auto op = parse_comparison(pj.at("op").get<std::string>());
        const double t = pj.at("threshold").get<double>();
        if (!it->min || !it->max) {
          throw SchemaError("protected continuous attribute '" + name +
                            "' needs a declared min and max");
        }
        const double lo = *it->min;
        const double hi = *it->max;
        const bool upper_privileged = op == Comparison::kGreater || op == Comparison::kGreaterEqual;
        const double upper_mid = 0.5 * (t + hi);
        const double lower_mid = 0.5 * (lo + t);
        double priv_rep = upper_privileged ? upper_mid : lower_mid;
        double unpriv_rep = upper_privileged ? lower_mid : upper_mid;
        if (pj.contains("privileged_value")) priv_rep = pj["privileged_value"].get<double>();
        if (pj.contains("unprivileged_value")) unpriv_rep = pj["unprivileged_value"].get<double>();
        entries.push_back({name, PrivilegedPredicate::threshold(op, t, priv_rep, unpriv_rep)});
      }
    }

    return Schema(std::move(attributes), label.at("name").get<std::string>(),
                  {label_values[0], label_values[1]}, j.at("favorable_label").get<int>(),
                  std::move(entries));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
}

Schema load_schema(const std::filesystem::path& path) {
  return parse_schema(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::shared_ptr<const Schema> schema, std::vector<double> values,
                 std::vector<int> labels, std::vector<double> weights, std::size_t dropped_rows)
    : schema_(std::move(schema)),
      values_(std::move(values)),
      labels_(std::move(labels)),
      weights_(std::move(weights)),
      dropped_rows_(dropped_rows) {
  if (!schema_) throw SchemaError("dataset without schema");
  const std::size_t w = schema_->width();
  if (values_.size() != labels_.size() * w) {
    throw ValidationError("value count does not match rows x attributes");
  }
  if (weights_.empty()) weights_.assign(labels_.size(), 1.0);
  if (weights_.size() != labels_.size()) {
    throw ValidationError("weight count does not match row count");
  }
  for (std::size_t r = 0; r < labels_.size(); ++r) {
    if (labels_[r] != 0 && labels_[r] != 1) {
      throw ValidationError("row " + std::to_string(r) + ": label must be 0 or 1", r);
    }
    if (!(weights_[r] > 0.0) || !std::isfinite(weights_[r])) {
      throw ValidationError("row " + std::to_string(r) + ": weight must be positive", r);
    }
    for (std::size_t c = 0; c < w; ++c) {
      const Attribute& a = schema_->attribute(c);
      if (!a.in_domain(values_[r * w + c])) {
        throw ValidationError("row " + std::to_string(r) + ": value of '" + a.name +
                                  "' outside its domain",
                              r);
      }
    }
  }
}

std::vector<double> Dataset::column(std::size_t index) const {
  std::vector<double> out(size());
  for (std::size_t r = 0; r < size(); ++r) out[r] = value(r, index);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t w = width();
  std::vector<double> values;
  values.reserve(rows.size() * w);
  std::vector<int> labels;
  std::vector<double> weights;
  for (std::size_t r : rows) {
    const auto src = row(r);
    values.insert(values.end(), src.begin(), src.end());
    labels.push_back(labels_[r]);
    weights.push_back(weights_[r]);
  }
  return Dataset(schema_, std::move(values), std::move(labels), std::move(weights));
}

Dataset Dataset::with_weights(std::vector<double> weights) const {
  return Dataset(schema_, values_, labels_, std::move(weights), dropped_rows_);
}

Dataset Dataset::with_values(std::vector<double> values) const {
  return Dataset(schema_, std::move(values), labels_, weights_, dropped_rows_);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(detail::trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(detail::trim(field));
  return fields;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?" || cell == "NA"; }

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Dataset parse_csv(std::string_view text, std::shared_ptr<const Schema> schema) {
  if (!schema) throw SchemaError("parse_csv without schema");
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV is empty; expected a header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);

  const auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("CSV header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> source(schema->width());
  for (std::size_t c = 0; c < schema->width(); ++c) source[c] = column_of(schema->attribute(c).name);
  const std::size_t label_column = column_of(schema->label_name());

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dropped = 0;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const std::size_t row = data_row++;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                                std::to_string(header.size()) + " fields, got " +
                                std::to_string(cells.size()),
                            row);
    }
    bool missing = is_missing(cells[label_column]);
    for (std::size_t c = 0; c < schema->width() && !missing; ++c) missing = is_missing(cells[source[c]]);
    if (missing) {
      ++dropped;
      continue;
    }

    const auto& label_values = schema->label_values();
    const std::string& label_cell = cells[label_column];
    if (label_cell == label_values[0]) {
      labels.push_back(0);
    } else if (label_cell == label_values[1]) {
      labels.push_back(1);
    } else {
      throw ValidationError("row " + std::to_string(row) + ": label '" + label_cell +
                                "' is not one of the declared label values",
                            row);
    }
    for (std::size_t c = 0; c < schema->width(); ++c) {
      const Attribute& a = schema->attribute(c);
      const std::string& cell = cells[source[c]];
      double v = 0.0;
      if (a.is_categorical()) {
        const auto it = std::find(a.categories.begin(), a.categories.end(), cell);
        if (it == a.categories.end()) {
          throw ValidationError("row " + std::to_string(row) + ": value '" + cell +
                                    "' not in the domain of '" + a.name + "'",
                                row);
        }
        v = static_cast<double>(it - a.categories.begin());
      } else {
        const auto parsed = detail::parse_double(cell);
        if (!parsed || !a.in_domain(*parsed)) {
          throw ValidationError("row " + std::to_string(row) + ": value '" + cell +
                                    "' not in the domain of '" + a.name + "'",
                                row);
        }
        v = *parsed;
      }
      values.push_back(v);
    }
  }
  return Dataset(std::move(schema), std::move(values), std::move(labels), {}, dropped);
}

Dataset load_csv(const std::filesystem::path& path, std::shared_ptr<const Schema> schema) {
  return parse_csv(detail::read_file(path), std::move(schema));
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Schema& schema = data.schema();
  for (const auto& a : schema.attributes()) out << quote_csv(a.name) << ',';
  out << quote_csv(schema.label_name()) << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.width(); ++c) {
      const Attribute& a = schema.attribute(c);
      const double v = data.value(r, c);
      if (a.is_categorical()) {
        out << quote_csv(a.categories[static_cast<std::size_t>(v)]);
      } else {
        out << detail::format_double(v);
      }
      out << ',';
    }
    out << quote_csv(schema.label_values()[static_cast<std::size_t>(data.label(r))]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Split / encode

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own index draw so the permutation does not depend
  // on the standard library's distribution implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

Encoding Encoding::fit(const Dataset& data) {
  const Schema& schema = data.schema();
  std::vector<ColumnScale> columns(schema.width());
  for (std::size_t c = 0; c < schema.width(); ++c) {
    const Attribute& a = schema.attribute(c);
    ColumnScale& s = columns[c];
    if (a.is_categorical()) {
      s.min = 0.0;
      s.max = static_cast<double>(a.categories.size() - 1);
    } else if (a.min && a.max) {
      s.min = *a.min;
      s.max = *a.max;
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t r = 0; r < data.size(); ++r) {
        lo = std::min(lo, data.value(r, c));
        hi = std::max(hi, data.value(r, c));
      }
      if (data.empty()) lo = hi = 0.0;
      s.min = a.min.value_or(lo);
      s.max = a.max.value_or(hi);
    }
    s.constant = !(s.max > s.min);
  }
  return Encoding(std::move(columns));
}

EncodedMatrix encode(const Dataset& data) { return encode(data, Encoding::fit(data)); }

EncodedMatrix encode(const Dataset& data, const Encoding& encoding) {
  if (encoding.width() != data.width()) {
    throw ConfigError("encoding width does not match dataset width");
  }
  EncodedMatrix m;
  m.features.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.width()));
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.width(); ++c) {
      m.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          encoding.encode(c, data.value(r, c));
    }
  }
  m.labels.assign(data.labels().begin(), data.labels().end());
  m.weights.assign(data.weights().begin(), data.weights().end());
  for (const auto& a : data.schema().attributes()) m.column_names.push_back(a.name);
  m.encoding = encoding;
  return m;
}

double decode_value(const Schema& schema, const Encoding& encoding, std::size_t column, double code) {
  const double raw = encoding.decode(column, code);
  return schema.attribute(column).is_categorical() ? std::round(raw) : raw;
}

// ---------------------------------------------------------------------------
// Protected groups

std::string ProtectedValuation::describe(const Schema& schema) const {
  std::string out;
  for (const auto& [index, group] : assignments) {
    if (!out.empty()) out += ",";
    out += schema.attribute(index).name;
    out += group == Group::kPrivileged ? "=privileged" : "=unprivileged";
  }
  return out;
}

bool ProtectedValuation::matches(std::span<const double> row, const Schema& schema) const {
  for (const auto& [index, group] : assignments) {
    if (schema.predicate(index).group_of(row[index]) != group) return false;
  }
  return true;
}

std::vector<ProtectedValuation> valuations(const Schema& schema, const ProtectedSet& protected_set) {
  if (protected_set.empty()) throw ConfigError("protected attribute set is empty");
  for (std::size_t index : protected_set) (void)schema.predicate(index);
  const std::size_t k = protected_set.size();
  std::vector<ProtectedValuation> out;
  out.reserve(std::size_t{1} << k);
  for (std::size_t bits = 0; bits < (std::size_t{1} << k); ++bits) {
    ProtectedValuation v;
    for (std::size_t i = 0; i < k; ++i) {
      // First attribute varies slowest.
      const bool privileged = (bits >> (k - 1 - i)) & 1U;
      v.assignments.emplace_back(protected_set[i],
                                 privileged ? Group::kPrivileged : Group::kUnprivileged);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ProtectedValuation> valuations(const Schema& schema) {
  return valuations(schema, schema.protected_set());
}

std::vector<bool> group_mask(const Dataset& data, const ProtectedValuation& valuation) {
  std::vector<bool> mask(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) mask[r] = valuation.matches(data.row(r), data.schema());
  return mask;
}

std::vector<bool> privileged_mask(const Dataset& data, std::size_t attribute) {
  const PrivilegedPredicate& p = data.schema().predicate(attribute);
  std::vector<bool> mask(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) mask[r] = p.is_privileged(data.value(r, attribute));
  return mask;
}

std::vector<bool> privileged_mask(const Dataset& data, const ProtectedSet& protected_set) {
  if (protected_set.empty()) throw ConfigError("protected attribute set is empty");
  std::vector<bool> mask(data.size(), true);
  for (std::size_t index : protected_set) {
    const auto one = privileged_mask(data, index);
    for (std::size_t r = 0; r < mask.size(); ++r) mask[r] = mask[r] && one[r];
  }
  return mask;
}

std::vector<std::size_t> valuation_index(const Dataset& data,
                                         const std::vector<ProtectedValuation>& all) {
  std::vector<std::size_t> out(data.size(), all.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t v = 0; v < all.size(); ++v) {
      if (all[v].matches(data.row(r), data.schema())) {
        out[r] = v;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixture

std::shared_ptr<const Schema> synth_schema() {
  std::vector<Attribute> attributes;
  attributes.push_back({"group", AttributeKind::kCategorical, {"minority", "majority"}, {}, {}});
  for (const char* name : {"x1", "x2", "x3", "x4"}) {
    attributes.push_back({name, AttributeKind::kContinuous, {}, 0.0, 1.0});
  }
  attributes.push_back({"level", AttributeKind::kCategorical, {"low", "mid", "high"}, {}, {}});
  std::vector<Schema::ProtectedEntry> prot;
  prot.push_back({"group", PrivilegedPredicate::categories({1}, 1.0, 0.0)});
  return std::make_shared<const Schema>(std::move(attributes), "outcome",
                                        std::array<std::string, 2>{"deny", "grant"}, 1,
                                        std::move(prot));
}

Dataset synth_generate(std::size_t rows, double bias, std::uint64_t seed) {
  if (rows == 0) throw ConfigError("synth_generate needs at least one row");
  if (!(bias >= 0.0 && bias <= 1.0)) throw ConfigError("bias must lie in [0, 1]");
  auto schema = synth_schema();
  detail::Rng rng(seed);
  std::vector<double> values;
  values.reserve(rows * schema->width());
  std::vector<int> labels;
  labels.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const bool privileged = rng.uniform() < 0.5;
    const double x1 = rng.uniform();
    const double x2 = rng.uniform();
    const double x3 = rng.uniform();
    const double x4 = rng.uniform();
    const double level = std::floor(rng.uniform() * 3.0);
    const double score = 4.0 * (0.9 * x1 + 0.7 * x2 - 0.8 * x3 + 0.4 * x4 + 0.3 * level - 0.9);
    const double p = 1.0 / (1.0 + std::exp(-score));
    int label;
    if (rng.uniform() < bias) {
      label = privileged ? 1 : 0;
    } else {
      label = rng.uniform() < p ? 1 : 0;
    }
    values.insert(values.end(), {privileged ? 1.0 : 0.0, x1, x2, x3, x4, level});
    labels.push_back(label);
  }
  return Dataset(std::move(schema), std::move(values), std::move(labels));
}

}  // namespace fairlens
