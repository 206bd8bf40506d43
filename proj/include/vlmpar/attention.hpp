#pragma once

#include <vector>

#include "vlmpar/tensor.hpp"

namespace vlmpar {

/// Scaled dot-product attention over column-partitioned heads.
///
/// q is [Lq x d], k and v are [Lk x d]; head h uses columns
/// [h*d_k, (h+1)*d_k) with d_k = d / num_heads. Returns the concatenated
/// head outputs [Lq x d]. With `causal`, query t only sees keys s <= t
/// (masked keys are skipped, which is the -inf mask applied exactly).
/// When `probs` is non-null it receives one [Lq x Lk] weight matrix per head.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t num_heads, bool causal,
                            std::vector<Tensor>* probs = nullptr);

/// d_model / num_heads, validating divisibility.
std::size_t head_width(std::size_t d_model, std::size_t num_heads);

}  // namespace vlmpar
