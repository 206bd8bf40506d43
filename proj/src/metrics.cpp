#include "vlmpar/metrics.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vlmpar/error.hpp"

namespace vlmpar {

BinaryMatrix binarize(const std::vector<std::vector<std::size_t>>& labels,
                      const std::vector<AttributeSpec>& specs) {
  std::size_t cols = 0;
  for (const auto& s : specs) cols += s.num_classes == 2 ? 1 : s.num_classes;
  BinaryMatrix out(labels.size(), cols);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r].size() != specs.size()) {
      throw DimensionError(fmt::format("sample {} has {} labels for {} attributes", r,
                                       labels[r].size(), specs.size()));
    }
    std::size_t c = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const std::size_t k = specs[i].num_classes;
      const std::size_t y = labels[r][i];
      if (y >= k) {
        throw InputError(fmt::format("class {} invalid for attribute '{}' with {} classes", y,
                                     specs[i].name, k));
      }
      if (k == 2) {
        out.at(r, c++) = static_cast<std::uint8_t>(y);
      } else {
        out.at(r, c + y) = 1;
        c += k;
      }
    }
  }
  return out;
}

std::vector<std::string> binary_column_names(const std::vector<AttributeSpec>& specs) {
  std::vector<std::string> names;
  for (const auto& s : specs) {
    if (s.num_classes == 2) {
      names.push_back(s.name);
    } else {
      for (std::size_t k = 0; k < s.num_classes; ++k) names.push_back(fmt::format("{}={}", s.name, k));
    }
  }
  return names;
}

std::vector<ConfusionCounts> confusion(const BinaryMatrix& predictions,
                                       const BinaryMatrix& labels) {
  if (predictions.rows != labels.rows || predictions.cols != labels.cols) {
    throw DimensionError(fmt::format("prediction matrix {}x{} vs label matrix {}x{}",
                                     predictions.rows, predictions.cols, labels.rows, labels.cols));
  }
  std::vector<ConfusionCounts> counts(labels.cols);
  for (std::size_t r = 0; r < labels.rows; ++r) {
    for (std::size_t c = 0; c < labels.cols; ++c) {
      const bool p = predictions.at(r, c) != 0;
      const bool y = labels.at(r, c) != 0;
      auto& cc = counts[c];
      if (p && y) ++cc.tp;
      else if (!p && !y) ++cc.tn;
      else if (p) ++cc.fp;
      else ++cc.fn;
    }
  }
  return counts;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MeanAccuracy mean_accuracy(const std::vector<ConfusionCounts>& counts) {
  if (counts.empty()) throw InputError("mean accuracy over zero columns");
  MeanAccuracy out;
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& c = counts[i];
    if (c.tp + c.fn == 0 || c.tn + c.fp == 0) out.flagged.push_back(i);
    sum += ratio(c.tp, c.tp + c.fn) + ratio(c.tn, c.tn + c.fp);
  }
  out.value = sum / (2.0 * static_cast<double>(counts.size()));
  return out;
}

F1Scores f1_scores(const std::vector<ConfusionCounts>& counts) {
  if (counts.empty()) throw InputError("F1 over zero columns");
  F1Scores out;
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& c = counts[i];
    double f1 = 0.0;
    if (c.tp == 0) {
      out.flagged.push_back(i);
    } else {
      const double p = ratio(c.tp, c.tp + c.fp);
      const double r = ratio(c.tp, c.tp + c.fn);
      f1 = 2.0 * p * r / (p + r);
    }
    out.per_column.push_back(f1);
    sum += f1;
  }
  out.mean = sum / static_cast<double>(counts.size());
  return out;
}

std::vector<double> attribute_accuracy(const std::vector<std::vector<std::size_t>>& predictions,
                                       const std::vector<std::vector<std::size_t>>& labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("prediction and label sample counts differ");
  }
  if (labels.empty()) return {};
  const std::size_t a = labels.front().size();
  std::vector<double> correct(a, 0.0);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (predictions[s].size() != a || labels[s].size() != a) {
      throw DimensionError(fmt::format("sample {} has a ragged label row", s));
    }
    for (std::size_t i = 0; i < a; ++i)
      if (predictions[s][i] == labels[s][i]) correct[i] += 1.0;
  }
  for (auto& c : correct) c /= static_cast<double>(labels.size());
  return correct;
}

MetricsReport build_report(const std::vector<std::vector<std::size_t>>& predictions,
                           const std::vector<std::vector<std::size_t>>& labels,
                           const std::vector<AttributeSpec>& specs) {
  const auto counts = confusion(binarize(predictions, specs), binarize(labels, specs));
  const auto names = binary_column_names(specs);
  const auto ma = mean_accuracy(counts);
  const auto f1 = f1_scores(counts);

  MetricsReport report;
  report.mean_accuracy = ma.value;
  report.mean_f1 = f1.mean;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& c = counts[i];
    report.columns.push_back(ColumnMetrics{names[i], c, ratio(c.tp, c.tp + c.fn),
                                           ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fp),
                                           f1.per_column[i]});
    if (c.tp + c.fn == 0) report.flagged.push_back({names[i], "no positive samples"});
    if (c.tn + c.fp == 0) report.flagged.push_back({names[i], "no negative samples"});
    if (c.tp == 0) report.flagged.push_back({names[i], "no true positives; F1 set to 0"});
  }
  for (const auto& s : specs) report.attribute_names.push_back(s.name);
  report.attribute_accuracy = attribute_accuracy(predictions, labels);
  if (report.attribute_accuracy.empty()) report.attribute_accuracy.assign(specs.size(), 0.0);
  return report;
}

std::string format_number(double v) { return fmt::format("{}", v); }

std::string MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json cols = ordered_json::array();
  for (const auto& c : columns) {
    cols.push_back(ordered_json{{"column", c.name},
                                {"tp", c.counts.tp},
                                {"tn", c.counts.tn},
                                {"fp", c.counts.fp},
                                {"fn", c.counts.fn},
                                {"recall_pos", c.recall_pos},
                                {"recall_neg", c.recall_neg},
                                {"precision", c.precision},
                                {"f1", c.f1}});
  }
  ordered_json flags = ordered_json::array();
  for (const auto& f : flagged) flags.push_back(ordered_json{{"column", f.column}, {"reason", f.reason}});
  ordered_json acc = ordered_json::object();
  for (std::size_t i = 0; i < attribute_names.size(); ++i) acc[attribute_names[i]] = attribute_accuracy[i];
  ordered_json j{{"num_columns", columns.size()},
                 {"mA", mean_accuracy},
                 {"F1", mean_f1},
                 {"columns", cols},
                 {"flagged", flags},
                 {"attribute_accuracy", acc}};
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::string out = "column,recall_pos,recall_neg,precision,f1,balanced_accuracy\n";
  for (const auto& c : columns) {
    out += fmt::format("{},{},{},{},{},{}\n", c.name, format_number(c.recall_pos),
                       format_number(c.recall_neg), format_number(c.precision),
                       format_number(c.f1), format_number(0.5 * (c.recall_pos + c.recall_neg)));
  }
  out += fmt::format("__aggregate__,,,,{},{}\n", format_number(mean_f1),
                     format_number(mean_accuracy));
  return out;
}

}  // namespace vlmpar
