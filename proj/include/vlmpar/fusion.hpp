#pragma once

#include <cstdint>
#include <vector>

#include "vlmpar/tensor.hpp"

namespace vlmpar {

/// Trainable cross-attention block owned by a single attribute.
/// Projections are full d_model x d_model matrices; head h reads columns
/// [h*d_k, (h+1)*d_k).
struct FusionBlock {
  Tensor wq, wk, wv, wo;
  Tensor ln_gamma, ln_beta;

  /// Projections ~ N(0, 1/d_model), gamma 1, beta 0.
  static FusionBlock initialize(std::size_t d_model, std::uint64_t seed);
  static FusionBlock zeros(std::size_t d_model);
};

struct AlignmentScore {
  std::size_t attribute_id = 0;
  double score = 0.0;
};

/// Cosine similarity between the image [CLS] embedding and the mean of the
/// prompt's token rows. Throws NumericError on a zero-norm vector.
AlignmentScore cosine_align(const Tensor& cls_embed, const Tensor& f_text,
                            std::size_t attribute_id);

/// Intermediates of one cross-attention pass, kept for the backward pass.
struct CrossAttentionTrace {
  Tensor q, k, v;              // N x d, T x d, T x d
  std::vector<Tensor> probs;   // per head, N x T
  Tensor concat;               // N x d, concatenated head outputs
  Tensor normalized;           // N x d, LN input after centering/scaling
  std::vector<double> inv_std; // per row of the residual sum
  Tensor out;                  // N x d
};

/// h_i = LayerNorm(concat_h softmax(Q_h K_h^T / sqrt(d_k)) V_h * W_O + f_img)
/// with Q = f_img W_Q, K = f_text W_K, V = f_text W_V.
Tensor cross_attention_forward(const Tensor& f_img, const Tensor& f_text, const FusionBlock& w,
                               std::size_t num_heads, double ln_eps,
                               CrossAttentionTrace* trace = nullptr);

/// One independent cross_attention_forward per attribute.
std::vector<Tensor> fuse_all(const Tensor& f_img, const std::vector<Tensor>& f_texts,
                             const std::vector<FusionBlock>& blocks, std::size_t num_heads,
                             double ln_eps);

}  // namespace vlmpar
