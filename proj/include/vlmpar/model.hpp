#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlmpar/encoders.hpp"
#include "vlmpar/fusion.hpp"
#include "vlmpar/heads.hpp"
#include "vlmpar/tokenizer.hpp"

namespace vlmpar {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t fusion_heads = 4;
  double fusion_ln_eps = 1e-5;
  std::vector<AttributeSpec> attributes;

  void validate() const;
};

enum class AblationMode { kFull, kNoCrossAttention };

std::string to_string(AblationMode mode);
AblationMode parse_ablation(const std::string& text);

/// Everything the optimizer may touch. `fusion` is either empty or holds one
/// block per attribute; `heads` always holds one head per attribute.
struct TrainableWeights {
  std::vector<FusionBlock> fusion;
  std::vector<HeadWeights> heads;

  static TrainableWeights initialize(const ModelConfig& cfg, std::uint64_t seed);
  /// Same layout, all zeros. With `include_fusion` false the fusion list is empty.
  static TrainableWeights zeros_like(const TrainableWeights& w, bool include_fusion = true);

  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void visit_mut(const std::function<void(const std::string&, Tensor&)>& fn);
  std::size_t parameter_count() const;
};

/// Gradients mirror the trainable layout; encoder weights never appear here.
using GradientSet = TrainableWeights;

/// Frozen encoders + trainable fusion/heads + tokenized prompts.
struct Model {
  ModelConfig config;
  EncoderWeights encoders;
  TrainableWeights trainable;
  std::vector<std::vector<std::uint32_t>> prompt_ids;

  /// Seeds every tensor from `seed`; prompts are tokenized with `vocab`.
  static Model create(const ModelConfig& cfg, const Vocab& vocab, std::uint64_t seed);

  /// Recomputes prompt_ids from the attribute prompts.
  void tokenize_prompts(const Vocab& vocab);
};

/// Encoder outputs for one image.
struct ImageFeatures {
  Tensor cls;      // d_model
  Tensor patches;  // N x d_model
};

/// Frozen-encoder outputs rounded to float32 so cached and freshly computed
/// features agree bitwise.
ImageFeatures encode_image(const Model& model, const Tensor& image);
std::vector<Tensor> encode_prompts(const Model& model);

struct AttributeOutput {
  HeadOutput head;
  Prediction prediction;
};

/// Heads applied to fused features (full) or to pooled raw patches (ablation).
std::vector<AttributeOutput> forward(const Model& model, const ImageFeatures& image,
                                     const std::vector<Tensor>& text, AblationMode mode);

}  // namespace vlmpar
