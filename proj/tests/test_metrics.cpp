#include <algorithm>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "vlmpar/error.hpp"
#include "vlmpar/metrics.hpp"
#include "vlmpar/tensor.hpp"

namespace vlmpar {
namespace {

BinaryMatrix column(const std::vector<int>& v) {
  BinaryMatrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m.at(i, 0) = static_cast<std::uint8_t>(v[i]);
  return m;
}

// Counting oracle: recomputes both metrics from raw 0/1 vectors, one column at a time.
struct Oracle {
  double ma = 0.0, f1 = 0.0;
};

Oracle brute_force(const BinaryMatrix& pred, const BinaryMatrix& label) {
  Oracle o;
  for (std::size_t c = 0; c < pred.cols; ++c) {
    int pos = 0, neg = 0, hit_pos = 0, hit_neg = 0, predicted_pos = 0;
    for (std::size_t r = 0; r < pred.rows; ++r) {
      const bool y = label.at(r, c), p = pred.at(r, c);
      pos += y;
      neg += !y;
      hit_pos += y && p;
      hit_neg += !y && !p;
      predicted_pos += p;
    }
    const double rp = pos ? static_cast<double>(hit_pos) / pos : 0.0;
    const double rn = neg ? static_cast<double>(hit_neg) / neg : 0.0;
    o.ma += (rp + rn) / 2.0;
    if (hit_pos > 0) {
      const double precision = static_cast<double>(hit_pos) / predicted_pos;
      o.f1 += 2.0 * precision * rp / (precision + rp);
    }
  }
  o.ma /= static_cast<double>(pred.cols);
  o.f1 /= static_cast<double>(pred.cols);
  return o;
}

TEST(Binarize, ColumnCounts) {
  const std::vector<AttributeSpec> bin{{"a", "", 2}};
  EXPECT_EQ(binarize({{0}, {1}, {1}}, bin).cols, 1u);
  const std::vector<AttributeSpec> tri{{"c", "", 3}};
  const BinaryMatrix m = binarize({{0}, {2}, {1}}, tri);
  ASSERT_EQ(m.cols, 3u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(m.at(r, 0) + m.at(r, 1) + m.at(r, 2), 1);
  EXPECT_EQ(m.at(1, 2), 1);
  const std::vector<AttributeSpec> mixed{{"a", "", 2}, {"c", "", 3}};
  EXPECT_EQ(binarize({{1, 2}}, mixed).cols, 4u);
  EXPECT_EQ(binary_column_names(mixed), (std::vector<std::string>{"a", "c=0", "c=1", "c=2"}));
}

TEST(Binarize, RejectsOutOfRangeLabel) {
  EXPECT_THROW(binarize({{2}}, {{"a", "", 2}}), InputError);
}

TEST(Confusion, IdentityInversionAndHandCase) {
  const BinaryMatrix y = column({1, 1, 0, 0});
  const auto same = confusion(y, y)[0];
  EXPECT_EQ(same.fp + same.fn, 0u);
  const auto flipped = confusion(column({0, 0, 1, 1}), y)[0];
  EXPECT_EQ(flipped.tp + flipped.tn, 0u);
  EXPECT_EQ(confusion(column({1, 0, 0, 1}), y)[0], (ConfusionCounts{1, 1, 1, 1}));
}

TEST(MeanAccuracy, ClosedForms) {
  EXPECT_EQ(mean_accuracy({ConfusionCounts{2, 2, 0, 0}}).value, 1.0);
  EXPECT_EQ(mean_accuracy({ConfusionCounts{2, 0, 2, 0}}).value, 0.5);
  // balanced accuracies 1.0 and 0.5
  EXPECT_EQ(mean_accuracy({ConfusionCounts{2, 2, 0, 0}, ConfusionCounts{2, 0, 2, 0}}).value, 0.75);
}

TEST(MeanAccuracy, ZeroDenominatorCountsAsZeroAndIsFlagged) {
  const auto ma = mean_accuracy({ConfusionCounts{3, 0, 0, 1}});  // no negatives
  EXPECT_EQ(ma.value, 0.75 / 2.0);
  EXPECT_EQ(ma.flagged, (std::vector<std::size_t>{0}));
}

TEST(F1, Formula) {
  EXPECT_EQ(f1_scores({ConfusionCounts{3, 1, 0, 0}}).mean, 1.0);
  EXPECT_NEAR(f1_scores({ConfusionCounts{1, 0, 1, 0}}).per_column[0], 2.0 / 3.0, 1e-15);
  const auto f = f1_scores({ConfusionCounts{0, 1, 2, 1}});
  EXPECT_EQ(f.per_column[0], 0.0);
  EXPECT_EQ(f.flagged, (std::vector<std::size_t>{0}));
}

TEST(Metrics, MatchBruteForceOnRandomMatrices) {
  Prng rng(99);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(3);
    BinaryMatrix p(rows, cols), y(rows, cols);
    for (auto& v : p.data) v = static_cast<std::uint8_t>(rng.below(2));
    for (auto& v : y.data) v = static_cast<std::uint8_t>(rng.below(2));
    const auto counts = confusion(p, y);
    const Oracle o = brute_force(p, y);
    EXPECT_EQ(mean_accuracy(counts).value, o.ma);
    EXPECT_EQ(f1_scores(counts).mean, o.f1);
  }
}

TEST(Metrics, SampleOrderDoesNotMatter) {
  Prng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMatrix p(6, 2), y(6, 2);
    for (auto& v : p.data) v = static_cast<std::uint8_t>(rng.below(2));
    for (auto& v : y.data) v = static_cast<std::uint8_t>(rng.below(2));
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    for (std::size_t i = 5; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    BinaryMatrix ps(6, 2), ys(6, 2);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 2; ++c) {
        ps.at(r, c) = p.at(perm[r], c);
        ys.at(r, c) = y.at(perm[r], c);
      }
    EXPECT_EQ(confusion(p, y), confusion(ps, ys));
  }
}

TEST(Metrics, ComplementPredictorSumsToOne) {
  Prng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    BinaryMatrix p(5, 1), y(5, 1);
    for (auto& v : p.data) v = static_cast<std::uint8_t>(rng.below(2));
    for (auto& v : y.data) v = static_cast<std::uint8_t>(rng.below(2));
    BinaryMatrix q = p;
    for (auto& v : q.data) v = static_cast<std::uint8_t>(1 - v);
    const auto a = mean_accuracy(confusion(p, y));
    if (!a.flagged.empty()) continue;
    EXPECT_NEAR(a.value + mean_accuracy(confusion(q, y)).value, 1.0, 1e-15);
  }
}

TEST(Report, PerfectAndConstantPredictors) {
  const std::vector<AttributeSpec> specs{{"hat", "", 2}, {"bag", "", 2}};
  const std::vector<std::vector<std::size_t>> labels{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
  const MetricsReport perfect = build_report(labels, labels, specs);
  EXPECT_EQ(perfect.mean_accuracy, 1.0);
  EXPECT_EQ(perfect.mean_f1, 1.0);
  EXPECT_TRUE(perfect.flagged.empty());
  const MetricsReport constant = build_report({{0, 0}, {0, 0}, {0, 0}, {0, 0}}, labels, specs);
  EXPECT_EQ(constant.mean_accuracy, 0.5);
  EXPECT_EQ(constant.attribute_accuracy, (std::vector<double>{0.5, 0.5}));
}

TEST(Report, CsvAndJsonLayout) {
  const std::vector<AttributeSpec> specs{{"hat", "", 2}};
  const MetricsReport r = build_report({{1}, {0}, {1}, {1}}, {{1}, {0}, {0}, {1}}, specs);
  EXPECT_EQ(r.to_csv(),
            "column,recall_pos,recall_neg,precision,f1,balanced_accuracy\n"
            "hat,1,0.5,0.6666666666666666,0.8,0.75\n"
            "__aggregate__,,,,0.8,0.75\n");
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["mA"], 0.75);
  EXPECT_EQ(j["columns"][0]["column"], "hat");
}

}  // namespace
}  // namespace vlmpar
