#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlmpar/heads.hpp"

namespace vlmpar {

/// samples x columns matrix of 0/1 values.
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> data;

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Binary attributes keep one column (class 1 is positive); K > 2 attributes
/// expand one-vs-rest into K columns. `labels[s][i]` is sample s, attribute i.
BinaryMatrix binarize(const std::vector<std::vector<std::size_t>>& labels,
                      const std::vector<AttributeSpec>& specs);

/// Column names matching binarize: "name" or "name=k".
std::vector<std::string> binary_column_names(const std::vector<AttributeSpec>& specs);

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

std::vector<ConfusionCounts> confusion(const BinaryMatrix& predictions, const BinaryMatrix& labels);

struct MeanAccuracy {
  double value = 0.0;
  /// Columns where a recall denominator was zero; that term counted as 0.
  std::vector<std::size_t> flagged;
};

MeanAccuracy mean_accuracy(const std::vector<ConfusionCounts>& counts);

struct F1Scores {
  std::vector<double> per_column;
  double mean = 0.0;
  /// Columns with TP = 0, whose F1 is defined as 0.
  std::vector<std::size_t> flagged;
};

F1Scores f1_scores(const std::vector<ConfusionCounts>& counts);

struct ColumnMetrics {
  std::string name;
  ConfusionCounts counts;
  double recall_pos = 0.0;
  double recall_neg = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct FlaggedColumn {
  std::string column;
  std::string reason;
};

struct MetricsReport {
  std::vector<ColumnMetrics> columns;
  double mean_accuracy = 0.0;
  double mean_f1 = 0.0;
  std::vector<FlaggedColumn> flagged;
  /// Exact-match accuracy per attribute (before binarization).
  std::vector<std::string> attribute_names;
  std::vector<double> attribute_accuracy;

  std::string to_json() const;
  /// One row per binary column and a final "__aggregate__" row carrying mA
  /// in the balanced_accuracy column and the mean F1 in the f1 column.
  std::string to_csv() const;
};

/// Per-attribute fraction of samples whose predicted class equals the label.
std::vector<double> attribute_accuracy(const std::vector<std::vector<std::size_t>>& predictions,
                                       const std::vector<std::vector<std::size_t>>& labels);

MetricsReport build_report(const std::vector<std::vector<std::size_t>>& predictions,
                           const std::vector<std::vector<std::size_t>>& labels,
                           const std::vector<AttributeSpec>& specs);

/// Shortest round-trip decimal form used in every CSV we write.
std::string format_number(double v);

}  // namespace vlmpar
