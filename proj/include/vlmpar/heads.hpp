#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlmpar/tensor.hpp"

namespace vlmpar {

struct AttributeSpec {
  std::string name;
  std::string prompt;
  std::size_t num_classes = 2;
};

/// Throws ConfigError on duplicate names, empty prompts, or K < 2.
void validate_attributes(const std::vector<AttributeSpec>& specs);

/// Linear classifier for one attribute: z = pooled * w + b.
struct HeadWeights {
  Tensor w;  // d_model x K
  Tensor b;  // K

  /// w ~ N(0, 1/d_model), b = 0.
  static HeadWeights initialize(std::size_t d_model, std::size_t num_classes,
                                std::uint64_t seed);
};

/// Composite per-attribute loss: lambda_ce * smoothed CE + lambda_focal * focal.
struct LossConfig {
  double lambda_ce = 1.0;
  double lambda_focal = 1.0;
  double focal_gamma = 2.0;
  double smoothing = 0.1;

  void validate() const;
};

/// Lower clamp applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;
};

struct PredictionRecord {
  std::vector<Prediction> per_attribute;
  std::vector<Tensor> distributions;
};

/// Arithmetic mean over the N rows of h_i.
Tensor pool(const Tensor& h);

struct HeadOutput {
  Tensor logits;
  Tensor probs;
};

HeadOutput head_forward(const Tensor& pooled, const HeadWeights& w);

/// argmax with ties to the lowest index; confidence is p[label].
Prediction predict(const Tensor& probs);

/// Smoothed targets put 1 - eps on y and eps / (K - 1) on every other class.
/// The focal term uses the unsmoothed true class.
double attribute_loss(const Tensor& probs, std::size_t label, const LossConfig& cfg);

/// Mean of the per-attribute losses.
double total_loss(const std::vector<double>& losses);

}  // namespace vlmpar
