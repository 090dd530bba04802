#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "fairlens/dataset.hpp"
#include "fairlens/error.hpp"
#include "support.hpp"

namespace fairlens {
namespace {

constexpr const char* kSchemaJson = R"({
  "format_version": 1,
  "label": {"name": "income", "values": ["low", "high"]},
  "favorable_label": 1,
  "attributes": [
    {"name": "gender", "kind": "categorical", "values": ["Female", "Male"]},
    {"name": "age", "kind": "continuous", "min": 17, "max": 90}
  ],
  "protected": ["gender", "age"],
  "privileged": {
    "gender": {"values": ["Male"]},
    "age": {"op": ">", "threshold": 30}
  }
})";

std::shared_ptr<const Schema> two_attribute_schema() {
  return std::make_shared<const Schema>(parse_schema(kSchemaJson));
}

TEST(Schema, ParsesPredicatesAndRepresentatives) {
  const Schema s = parse_schema(kSchemaJson);
  EXPECT_EQ(s.width(), 2u);
  EXPECT_EQ(s.label_name(), "income");
  EXPECT_EQ(s.favorable_label(), 1);
  ASSERT_EQ(s.protected_set(), (ProtectedSet{0, 1}));
  EXPECT_TRUE(s.predicate(0).is_privileged(1.0));
  EXPECT_FALSE(s.predicate(0).is_privileged(0.0));
  EXPECT_TRUE(s.predicate(1).is_privileged(31.0));
  EXPECT_FALSE(s.predicate(1).is_privileged(30.0));
  // Threshold representatives default to the middle of each side of the domain.
  EXPECT_DOUBLE_EQ(s.predicate(1).representative(Group::kPrivileged), 60.0);
  EXPECT_DOUBLE_EQ(s.predicate(1).representative(Group::kUnprivileged), 23.5);
}

TEST(Schema, RoundTripKeepsFingerprint) {
  const Schema s = parse_schema(kSchemaJson);
  const Schema again = parse_schema(schema_to_json(s));
  EXPECT_EQ(s.fingerprint(), again.fingerprint());
  EXPECT_EQ(s.fingerprint().size(), 16u);
}

TEST(Schema, RejectsBrokenDefinitions) {
  // Unknown protected attribute.
  EXPECT_THROW(parse_schema(R"({"format_version":1,"label":{"name":"y","values":["a","b"]},
    "favorable_label":1,"attributes":[{"name":"x","kind":"continuous"}],
    "protected":["z"],"privileged":{}})"),
               SchemaError);
  // Predicate that leaves the unprivileged group empty.
  EXPECT_THROW(parse_schema(R"({"format_version":1,"label":{"name":"y","values":["a","b"]},
    "favorable_label":1,"attributes":[{"name":"g","kind":"categorical","values":["u","v"]}],
    "protected":["g"],"privileged":{"g":{"values":["u","v"]}}})"),
               SchemaError);
  // Favorable label out of range.
  EXPECT_THROW(parse_schema(R"({"format_version":1,"label":{"name":"y","values":["a","b"]},
    "favorable_label":2,"attributes":[{"name":"x","kind":"continuous"}],
    "protected":[],"privileged":{}})"),
               SchemaError);
  // Empty categorical domain.
  EXPECT_THROW(parse_schema(R"({"format_version":1,"label":{"name":"y","values":["a","b"]},
    "favorable_label":1,"attributes":[{"name":"g","kind":"categorical","values":[]}],
    "protected":[],"privileged":{}})"),
               SchemaError);
}

TEST(Schema, ResolvesProtectedNames) {
  const Schema s = parse_schema(kSchemaJson);
  EXPECT_EQ(s.resolve_protected({}), (ProtectedSet{0, 1}));
  EXPECT_EQ(s.resolve_protected({"age"}), (ProtectedSet{1}));
  EXPECT_THROW(s.resolve_protected({"income"}), ConfigError);
}

TEST(Csv, LoadsWellFormedRows) {
  const Dataset d = parse_csv("gender,age,income\nMale,40,high\nFemale,22,low\nMale,31,low\n",
                              two_attribute_schema());
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.value(0, 0), 1.0);
  EXPECT_EQ(d.value(1, 1), 22.0);
  EXPECT_EQ(d.label(0), 1);
  EXPECT_EQ(d.label(2), 0);
  EXPECT_EQ(d.weights()[1], 1.0);
}

TEST(Csv, MissingLabelColumnIsSchemaError) {
  EXPECT_THROW(parse_csv("gender,age\nMale,40\n", two_attribute_schema()), SchemaError);
}

TEST(Csv, OutOfDomainValueNamesTheRow) {
  try {
    parse_csv("gender,age,income\nMale,40,high\nOther,22,low\n", two_attribute_schema());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
  EXPECT_THROW(parse_csv("gender,age,income\nMale,95,high\n", two_attribute_schema()), ValidationError);
}

TEST(Csv, MissingCellsDropTheRow) {
  const Dataset d = parse_csv("gender,age,income\nMale,?,high\nFemale,22,low\n,30,low\nMale,NA,low\n",
                              two_attribute_schema());
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.dropped_rows(), 3u);
}

TEST(Csv, ExtraColumnsAndQuotesAreHandled) {
  const Dataset d = parse_csv("id,\"age\",gender,income\n7,\"33\",Male,high\n", two_attribute_schema());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.value(0, 1), 33.0);
}

TEST(Csv, WriteThenLoadRoundTrips) {
  const Dataset d = synth_generate(50, 0.3, 3);
  const auto path = std::filesystem::temp_directory_path() / "fairlens_roundtrip.csv";
  write_csv(path, d);
  const Dataset back = load_csv(path, d.schema_ptr());
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.values().size(); ++i) EXPECT_EQ(back.values()[i], d.values()[i]);
  for (std::size_t r = 0; r < d.size(); ++r) EXPECT_EQ(back.label(r), d.label(r));
}

TEST(Split, SizesAndDeterminism) {
  const Dataset d = synth_generate(10, 0.0, 1);
  const auto [train, test] = split(d, 0.7, 42);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(test.size(), 3u);
  const auto [train2, test2] = split(d, 0.7, 42);
  EXPECT_TRUE(std::equal(train.values().begin(), train.values().end(), train2.values().begin()));
  EXPECT_TRUE(std::equal(test.values().begin(), test.values().end(), test2.values().begin()));
}

TEST(Split, BankScaleArithmetic) {
  const Dataset d = synth_generate(45000, 0.0, 1);
  const auto [train, test] = split(d, 0.7, 0);
  EXPECT_EQ(train.size(), 31500u);
  EXPECT_EQ(test.size(), 13500u);
}

TEST(Split, PartitionPreservesRows) {
  const Dataset d = synth_generate(101, 0.2, 9);
  const auto [train, test] = split(d, 0.6, 5);
  std::vector<std::vector<double>> all, parts;
  for (std::size_t r = 0; r < d.size(); ++r) all.emplace_back(d.row(r).begin(), d.row(r).end());
  for (const Dataset* p : {&train, &test}) {
    for (std::size_t r = 0; r < p->size(); ++r) parts.emplace_back(p->row(r).begin(), p->row(r).end());
  }
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  EXPECT_EQ(all, parts);
  EXPECT_THROW(split(d, 1.0, 0), ConfigError);
  EXPECT_THROW(split(d, 0.0, 0), ConfigError);
}

TEST(Encoding, OrdinalCodesAndDomainScaling) {
  std::vector<Attribute> attributes{
      {"five", AttributeKind::kCategorical, {"a", "b", "c", "d", "e"}, {}, {}},
      {"age", AttributeKind::kContinuous, {}, 17.0, 90.0},
      {"flat", AttributeKind::kContinuous, {}, {}, {}},
      {"sex", AttributeKind::kCategorical, {"Male", "Female"}, {}, {}},
  };
  auto schema = std::make_shared<const Schema>(std::move(attributes), "y", std::array<std::string, 2>{"n", "p"},
                                               1, std::vector<Schema::ProtectedEntry>{});
  Dataset d(schema, {0, 17, 5, 0, 1, 50, 5, 1, 2, 90, 5, 0, 3, 20, 5, 1, 4, 30, 5, 0}, {0, 1, 0, 1, 0});
  const EncodedMatrix m = encode(d);
  for (int r = 0; r < 5; ++r) EXPECT_DOUBLE_EQ(m.features(r, 0), 0.25 * r);
  EXPECT_DOUBLE_EQ(m.features(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.features(2, 1), 1.0);
  // Constant column: scaled to 0 and flagged.
  EXPECT_TRUE(m.encoding.column(2).constant);
  for (int r = 0; r < 5; ++r) EXPECT_EQ(m.features(r, 2), 0.0);
  EXPECT_EQ(m.features(0, 3), 0.0);
  EXPECT_EQ(m.features(1, 3), 1.0);
  EXPECT_EQ(m.column_names[1], "age");
}

TEST(Encoding, DecodeRecoversRawValues) {
  std::mt19937_64 rng(11);
  const Dataset d = testing::tiny_dataset(40, rng);
  const EncodedMatrix m = encode(d);
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.width(); ++c) {
      const double back = decode_value(d.schema(), m.encoding, c, m.features(static_cast<Eigen::Index>(r),
                                                                            static_cast<Eigen::Index>(c)));
      if (d.schema().attribute(c).is_categorical()) {
        EXPECT_EQ(back, d.value(r, c));
      } else {
        EXPECT_NEAR(back, d.value(r, c), 1e-9);
      }
      EXPECT_GE(m.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 0.0);
      EXPECT_LE(m.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), 1.0);
    }
  }
}

TEST(Valuations, CountsAndOrder) {
  const auto schema = testing::tiny_schema();
  EXPECT_EQ(valuations(*schema, {0, 1}).size(), 4u);
  EXPECT_EQ(valuations(*schema, {1}).size(), 2u);
  EXPECT_THROW(valuations(*schema, {}), ConfigError);

  auto three = std::make_shared<const Schema>(
      std::vector<Attribute>{{"a", AttributeKind::kCategorical, {"0", "1"}, {}, {}},
                             {"b", AttributeKind::kCategorical, {"0", "1"}, {}, {}},
                             {"c", AttributeKind::kContinuous, {}, 0.0, 100.0}},
      "y", std::array<std::string, 2>{"n", "p"}, 1,
      std::vector<Schema::ProtectedEntry>{{"a", PrivilegedPredicate::categories({1}, 1, 0)},
                                          {"b", PrivilegedPredicate::categories({1}, 1, 0)},
                                          {"c", PrivilegedPredicate::threshold(Comparison::kGreater, 30, 60, 15)}});
  EXPECT_EQ(valuations(*three).size(), 8u);
}

TEST(Valuations, MasksPartitionRows) {
  std::mt19937_64 rng(5);
  const Dataset d = testing::tiny_dataset(60, rng);
  const auto all = valuations(d.schema(), {0, 1});
  std::vector<int> hits(d.size(), 0);
  for (const auto& v : all) {
    const auto mask = group_mask(d, v);
    for (std::size_t r = 0; r < d.size(); ++r) hits[r] += mask[r];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Valuations, MaskMatchesHandScan) {
  auto schema = testing::tiny_schema();
  // (gender, race): Male=1, White=1.
  Dataset d(schema, {1, 1, 1, 0, 0, 1, 2, 1, 1, 1, 3, 2, 0, 0, 4, 0, 1, 0, 5, 1, 1, 1, 6, 2}, {0, 1, 0, 1, 0, 1});
  ProtectedValuation male_white{{{0, Group::kPrivileged}, {1, Group::kPrivileged}}};
  EXPECT_EQ(group_mask(d, male_white), (std::vector<bool>{true, false, true, false, false, true}));
  ProtectedValuation female_black{{{0, Group::kUnprivileged}, {1, Group::kUnprivileged}}};
  EXPECT_EQ(group_mask(d, female_black), (std::vector<bool>{false, false, false, true, false, false}));
}

TEST(Synth, UnbiasedLabelsHaveNoGap) {
  const Dataset d = synth_generate(10000, 0.0, 21);
  const auto priv = privileged_mask(d, 0);
  double n[2] = {0, 0}, fav[2] = {0, 0};
  for (std::size_t r = 0; r < d.size(); ++r) {
    n[priv[r]] += 1;
    fav[priv[r]] += d.label(r);
  }
  EXPECT_LE(std::abs(fav[1] / n[1] - fav[0] / n[0]), 0.05);
}

TEST(Synth, PlantedGapMatchesBias) {
  const Dataset d = synth_generate(10000, 0.3, 22);
  const auto priv = privileged_mask(d, 0);
  double n[2] = {0, 0}, fav[2] = {0, 0};
  for (std::size_t r = 0; r < d.size(); ++r) {
    n[priv[r]] += 1;
    fav[priv[r]] += d.label(r);
  }
  EXPECT_NEAR(fav[1] / n[1] - fav[0] / n[0], 0.3, 0.05);
}

TEST(Synth, DeterministicForSeed) {
  const Dataset a = synth_generate(200, 0.3, 4);
  const Dataset b = synth_generate(200, 0.3, 4);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_TRUE(std::equal(a.labels().begin(), a.labels().end(), b.labels().begin()));
  EXPECT_GE(a.width() - a.schema().protected_set().size(), 4u);
}

TEST(Dataset, RejectsNonPositiveWeights) {
  auto schema = testing::tiny_schema();
  EXPECT_THROW(Dataset(schema, {0, 0, 1, 0}, {1}, {0.0}), ValidationError);
  EXPECT_THROW(Dataset(schema, {0, 0, 1, 0}, {1}, {1.0, 1.0}), ValidationError);
}

}  // namespace
}  // namespace fairlens
