#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fairlens/error.hpp"
#include "fairlens/repair.hpp"
#include "support.hpp"

namespace fairlens {
namespace {

using testing::tiny_dataset;

// Weighted favorable rate per privileged flag, counted by hand.
std::pair<double, double> weighted_rates(const Dataset& d, std::size_t attr, const std::vector<double>& w) {
  double n[2] = {0, 0}, fav[2] = {0, 0};
  for (std::size_t r = 0; r < d.size(); ++r) {
    const int g = d.schema().predicate(attr).is_privileged(d.value(r, attr)) ? 1 : 0;
    n[g] += w[r];
    if (d.label(r) == d.schema().favorable_label()) fav[g] += w[r];
  }
  return {fav[0] / n[0], fav[1] / n[1]};
}

bool all_cells_filled(const Dataset& d, std::size_t attr) {
  int seen[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t r = 0; r < d.size(); ++r) {
    seen[d.schema().predicate(attr).is_privileged(d.value(r, attr))][d.label(r)] = 1;
  }
  return seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1];
}

TEST(Reweigh, BalancesGroupsOnRandomFixtures) {
  std::mt19937_64 rng(1);
  int fixtures = 0;
  while (fixtures < 50) {
    const Dataset d = tiny_dataset(12 + rng() % 60, rng);
    if (!all_cells_filled(d, 0)) continue;
    ++fixtures;
    const auto w = reweigh(d, 0);
    const auto [unpriv, priv] = weighted_rates(d, 0, w);
    EXPECT_NEAR(unpriv, priv, 1e-9);
    double total = 0, fav = 0;
    for (std::size_t r = 0; r < d.size(); ++r) {
      total += w[r];
      fav += d.label(r) == 1 ? w[r] : 0.0;
    }
    EXPECT_NEAR(unpriv, fav / total, 1e-9);
    EXPECT_NEAR(total, static_cast<double>(d.size()), 1e-9);
  }
}

TEST(Reweigh, WorkedCellCountsGiveTwoThirds) {
  // 10 rows, 5 privileged, 4 favorable, 3 privileged and favorable.
  const std::vector<int> labels{1, 1, 1, 0, 0, 1, 0, 0, 0, 0};
  const std::vector<std::size_t> group{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  const auto w = reweigh_groups(labels, group, 2);
  EXPECT_EQ(w[0], 2.0 / 3.0);
  EXPECT_EQ(w[0], (5.0 * 4.0) / (10.0 * 3.0));
  EXPECT_DOUBLE_EQ(w[5], (5.0 * 4.0) / (10.0 * 1.0));
}

TEST(Reweigh, IndependentDataKeepsUnitWeights) {
  const std::vector<int> labels{1, 0, 1, 0, 1, 0, 1, 0};
  const std::vector<std::size_t> group{0, 0, 1, 1, 0, 0, 1, 1};
  for (double w : reweigh_groups(labels, group, 2)) EXPECT_EQ(w, 1.0);
}

TEST(Reweigh, EmptyCellIsAnError) {
  EXPECT_THROW(reweigh_groups(std::vector<int>{1, 1, 0}, std::vector<std::size_t>{1, 1, 0}, 2), ConfigError);
}

TEST(Reweigh, ValuationPartitionBalancesEveryGroup) {
  std::mt19937_64 rng(2);
  const Dataset d = tiny_dataset(400, rng);
  const auto w = reweigh(d, ProtectedSet{0, 1});
  const auto all = valuations(d.schema(), {0, 1});
  for (const auto& v : all) {
    double n = 0, fav = 0;
    for (std::size_t r = 0; r < d.size(); ++r) {
      if (!v.matches(d.row(r), d.schema())) continue;
      n += w[r];
      fav += d.label(r) == 1 ? w[r] : 0.0;
    }
    double tn = 0, tf = 0;
    for (std::size_t r = 0; r < d.size(); ++r) {
      tn += w[r];
      tf += d.label(r) == 1 ? w[r] : 0.0;
    }
    EXPECT_NEAR(fav / n, tf / tn, 1e-9) << v.describe(d.schema());
  }
}

// --- Disparate impact remover ----------------------------------------------------

TEST(Dir, LevelZeroIsIdentity) {
  std::mt19937_64 rng(3);
  const Dataset d = tiny_dataset(50, rng);
  const Dataset out = disparate_impact_remove(d, {0}, 0.0);
  EXPECT_TRUE(std::equal(d.values().begin(), d.values().end(), out.values().begin()));
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> points = a;
  points.insert(points.end(), b.begin(), b.end());
  double worst = 0.0;
  for (double x : points) {
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), x) - a.begin()) / static_cast<double>(a.size());
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), x) - b.begin()) / static_cast<double>(b.size());
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

TEST(Dir, FullRepairAlignsGroupQuantiles) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    // Shift score upward for the privileged group.
    Dataset base = tiny_dataset(80 + 20 * static_cast<std::size_t>(trial), rng);
    std::vector<double> values(base.values().begin(), base.values().end());
    for (std::size_t r = 0; r < base.size(); ++r) {
      const double shift = base.value(r, 0) == 1.0 ? 3.0 : 0.0;
      values[r * 4 + 2] = std::clamp(3.0 + shift + normal(rng), 0.0, 10.0);
    }
    const Dataset d = base.with_values(values);
    const Dataset out = disparate_impact_remove(d, {0}, 1.0);
    std::vector<double> groups[2], before[2];
    for (std::size_t r = 0; r < d.size(); ++r) {
      const int g = static_cast<int>(d.value(r, 0));
      groups[g].push_back(out.value(r, 2));
      before[g].push_back(d.value(r, 2));
    }
    const double bound = 1.0 / static_cast<double>(std::min(groups[0].size(), groups[1].size()));
    EXPECT_GT(ks_distance(before[0], before[1]), 0.5);
    EXPECT_LE(ks_distance(groups[0], groups[1]), bound + 1e-12) << "trial " << trial;
  }
}

TEST(Dir, PreservesRanksAndProtectedColumns) {
  std::mt19937_64 rng(5);
  const Dataset d = tiny_dataset(120, rng);
  for (double level : {0.25, 0.5, 1.0}) {
    const Dataset out = disparate_impact_remove(d, {0, 1}, level);
    for (std::size_t r = 0; r < d.size(); ++r) {
      EXPECT_EQ(out.value(r, 0), d.value(r, 0));
      EXPECT_EQ(out.value(r, 1), d.value(r, 1));
      EXPECT_EQ(out.value(r, 3), d.value(r, 3));  // categorical
      EXPECT_GE(out.value(r, 2), 0.0);
      EXPECT_LE(out.value(r, 2), 10.0);
    }
    for (std::size_t a = 0; a < d.size(); ++a) {
      for (std::size_t b = 0; b < d.size(); ++b) {
        if (d.value(a, 0) != d.value(b, 0) || d.value(a, 1) != d.value(b, 1)) continue;
        if (d.value(a, 2) < d.value(b, 2)) EXPECT_LE(out.value(a, 2), out.value(b, 2));
      }
    }
  }
  EXPECT_THROW(disparate_impact_remove(d, {0}, 1.5), ConfigError);
}

// --- Reject option ------------------------------------------------------------------

TEST(RejectOption, RuleInsideTheBand) {
  Matrix p(4, 2);
  p << 0.55, 0.45,  // unprivileged, inside 0.6: favorable
      0.45, 0.55,   // privileged, inside: unfavorable
      0.9, 0.1,     // outside: unchanged
      0.2, 0.8;     // outside: unchanged
  const std::vector<bool> priv{false, true, false, true};
  EXPECT_EQ(reject_option_predict(p, priv, CriticalRegion(0.6), 1), (std::vector<int>{1, 0, 0, 1}));
  EXPECT_EQ(reject_option_predict(p, priv, CriticalRegion(std::nextafter(0.5, 1.0)), 1), argmax(p));
  EXPECT_THROW(CriticalRegion(0.5), ConfigError);
  EXPECT_THROW(CriticalRegion(1.2), ConfigError);
}

// --- Jobs on synthetic data --------------------------------------------------------

RepairJob synth_job(double bias, std::uint64_t seed, std::size_t rows = 3000) {
  const Dataset data = synth_generate(rows, bias, seed);
  auto parts = split(data, 0.7, seed);
  TrainConfig c;
  c.seed = seed;
  c.epochs = 20;
  c.hidden = {32, 16, 8};
  RepairJob job{c, std::move(parts.first), std::move(parts.second), {MetricKind::kSpd, {0}}, std::nullopt};
  job.baseline = baseline_model(job);
  return job;
}

void expect_consistent(const RepairOutcome& o) {
  EXPECT_EQ(o.improvement(), o.fairness_before - o.fairness_after);
  EXPECT_EQ(o.accuracy_delta(), o.accuracy_after - o.accuracy_before);
  for (double v : {o.fairness_before, o.fairness_after, o.accuracy_before, o.accuracy_after}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

class SynthRepair : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { biased_ = new RepairJob(synth_job(0.3, 7)); }
  static void TearDownTestSuite() {
    delete biased_;
    biased_ = nullptr;
  }
  static RepairJob* biased_;
};
RepairJob* SynthRepair::biased_ = nullptr;

TEST_F(SynthRepair, ReweighingReducesSpd) {
  const RepairResult r = repair_pre(*biased_, Method::kReweighing);
  expect_consistent(r.outcome);
  EXPECT_GE(r.outcome.fairness_before, 0.15);
  EXPECT_GE(r.outcome.improvement(), 0.3 * r.outcome.fairness_before);
  EXPECT_GE(r.outcome.accuracy_delta(), -0.05);
}

TEST_F(SynthRepair, PenaltyZeroMatchesBaseline) {
  const RepairResult r = repair_in(*biased_, 0.0);
  const EvalSet test(biased_->test, Encoding::fit(biased_->train));
  EXPECT_EQ(forward(*r.model, test.inputs()), forward(*biased_->baseline, test.inputs()));
  EXPECT_EQ(r.outcome.improvement(), 0.0);
}

TEST_F(SynthRepair, LargerPenaltyLowersSpd) {
  const double none = repair_in(*biased_, 0.0).outcome.fairness_after;
  const double mid = repair_in(*biased_, 1.0).outcome.fairness_after;
  const double high = repair_in(*biased_, 5.0).outcome.fairness_after;
  EXPECT_LT(high, none);
  EXPECT_LE(mid, none);
}

TEST_F(SynthRepair, RejectOptionDoesNotRaiseSpd) {
  const RepairResult r = repair_post(*biased_, CriticalRegion(0.7));
  expect_consistent(r.outcome);
  EXPECT_LE(r.outcome.fairness_after, r.outcome.fairness_before);
  EXPECT_FALSE(r.model.has_value());
  // Only rows inside the band may change.
  const EvalSet test(biased_->test, Encoding::fit(biased_->train));
  const Matrix p = forward(*biased_->baseline, test.inputs());
  for (const auto& [row, label] : r.overlay) {
    EXPECT_LE(std::max(p(static_cast<Eigen::Index>(row), 0), p(static_cast<Eigen::Index>(row), 1)), 0.7);
    EXPECT_EQ(r.predictions[row], label);
  }
  const RepairResult none = repair_post(*biased_, CriticalRegion(std::nextafter(0.5, 1.0)));
  EXPECT_EQ(none.outcome.improvement(), 0.0);
}

TEST_F(SynthRepair, DirLevelZeroIsTheBaseline) {
  const RepairResult r = repair_pre(*biased_, Method::kDisparateImpactRemover, 0.0);
  EXPECT_EQ(r.outcome.fairness_after, r.outcome.fairness_before);
  EXPECT_EQ(r.outcome.accuracy_after, r.outcome.accuracy_before);
}

TEST(SynthRepairUnbiased, ReweighingHasLittleToFix) {
  const RepairJob job = synth_job(0.0, 3);
  const RepairResult r = repair_pre(job, Method::kReweighing);
  EXPECT_LE(std::abs(r.outcome.improvement()), 0.03);
}

TEST(Outcome, JsonCarriesScores) {
  const auto schema = synth_schema();
  const RepairOutcome o{Method::kFairnessRegularizer, {MetricKind::kSpd, {0}}, 0.4, 0.1, 0.8, 0.78};
  const std::string text = outcome_to_json(o, *schema);
  EXPECT_NE(text.find("\"FAIR-REG\""), std::string::npos);
  EXPECT_NE(text.find("\"in-processing\""), std::string::npos);
  EXPECT_NE(text.find("\"group\""), std::string::npos);
  EXPECT_EQ(overlay_to_json({{3, 1}}).find("\"row\"") != std::string::npos, true);
  EXPECT_EQ(parse_method("rw"), Method::kReweighing);
  EXPECT_EQ(parse_method("FAIR-REG"), Method::kFairnessRegularizer);
  EXPECT_EQ(parse_category("pre"), Category::kPre);
  EXPECT_THROW(parse_method("META"), ConfigError);
}

}  // namespace
}  // namespace fairlens
