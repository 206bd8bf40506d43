#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlmpar/tensor.hpp"

namespace vlmpar {

/// Dimensions shared by the frozen vision and text transformers.
struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t mlp_hidden = 256;
  std::size_t patch_size = 8;
  std::size_t image_hw = 32;
  std::size_t max_tokens = 16;
  std::size_t vocab_size = 256;
  double ln_eps = 1e-6;
  double init_scale = 0.02;

  /// Throws ConfigError when the dimensions are inconsistent.
  void validate() const;

  std::size_t num_patches() const {
    const std::size_t g = image_hw / patch_size;
    return g * g;
  }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
};

/// Self-attention + MLP block; every matrix is applied as `x * W`.
struct EncoderLayerWeights {
  Tensor wq, wk, wv, wo;          // d_model x d_model
  Tensor ln1_gamma, ln1_beta;     // d_model
  Tensor mlp_in;                  // d_model x mlp_hidden
  Tensor mlp_out;                 // mlp_hidden x d_model
  Tensor ln2_gamma, ln2_beta;     // d_model
};

struct VisionWeights {
  Tensor patch_proj;  // d_model x (P*P*3); applied as W_E * vec(patch)
  Tensor pos;         // (N + 1) x d_model, row 0 belongs to the class token
  Tensor cls;         // d_model
  std::vector<EncoderLayerWeights> layers;
};

struct TextWeights {
  Tensor token_table;  // vocab_size x d_model
  Tensor pos;          // max_tokens x d_model
  std::vector<EncoderLayerWeights> layers;
};

/// Frozen parameters of both encoders. Never touched by training.
struct EncoderWeights {
  VisionWeights vision;
  TextWeights text;

  /// Seeded initialization: matrices ~ N(0, init_scale^2), LayerNorm gamma 1
  /// and beta 0. Values are rounded to float32 so that a saved container
  /// reproduces them exactly.
  static EncoderWeights initialize(const EncoderConfig& cfg, std::uint64_t seed);

  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void visit_mut(const std::function<void(const std::string&, Tensor&)>& fn);

  /// 64-bit FNV-1a over tensor names, shapes and value bytes.
  std::uint64_t checksum() const;

  /// Throws DimensionError if any tensor disagrees with `cfg`.
  void check_shapes(const EncoderConfig& cfg) const;
};

std::string checksum_hex(std::uint64_t checksum);

// ---- vision ----------------------------------------------------------------

/// [H x W x 3] image -> [N x P*P*3] rows in row-major patch order. Each row is
/// the patch flattened as (row, col, channel).
Tensor patchify(const Tensor& image, std::size_t patch_size);

/// Inverse of patchify for an image of the given height and width.
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t patch_size);

/// Row 0 = cls + pos[0]; row p = W_E vec(patch p-1) + pos[p].
Tensor embed_patches(const Tensor& patches, const VisionWeights& weights);

/// Post-LN transformer block:
///   h' = LN(MSA(h) + h);  out = LN(MLP(h') + h').
Tensor encoder_layer_forward(const Tensor& h, const EncoderLayerWeights& layer,
                             std::size_t num_heads, bool causal, double ln_eps);

struct VisionOutput {
  Tensor cls;      // d_model
  Tensor patches;  // N x d_model
};

/// Full final-layer token matrix [(N + 1) x d_model].
Tensor vision_tokens(const Tensor& image, const EncoderConfig& cfg, const VisionWeights& weights);

/// Splits vision_tokens into the class embedding and the N patch rows.
VisionOutput vision_forward(const Tensor& image, const EncoderConfig& cfg,
                            const VisionWeights& weights);

// ---- text ------------------------------------------------------------------

/// Token embedding + positional embedding, then causal layers. Returns all
/// T final-layer rows.
Tensor text_forward(const std::vector<std::uint32_t>& ids, const EncoderConfig& cfg,
                    const TextWeights& weights);

}  // namespace vlmpar
