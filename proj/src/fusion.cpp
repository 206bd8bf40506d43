#include "vlmpar/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "vlmpar/attention.hpp"
#include "vlmpar/error.hpp"

namespace vlmpar {

FusionBlock FusionBlock::initialize(std::size_t d_model, std::uint64_t seed) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  const Shape sq{d_model, d_model};
  FusionBlock b;
  b.wq = seeded_normal(sq, derive_seed(seed, "wq"), scale);
  b.wk = seeded_normal(sq, derive_seed(seed, "wk"), scale);
  b.wv = seeded_normal(sq, derive_seed(seed, "wv"), scale);
  b.wo = seeded_normal(sq, derive_seed(seed, "wo"), scale);
  b.ln_gamma = Tensor({d_model}, 1.0);
  b.ln_beta = Tensor({d_model}, 0.0);
  return b;
}

FusionBlock FusionBlock::zeros(std::size_t d_model) {
  const Shape sq{d_model, d_model};
  return FusionBlock{Tensor(sq), Tensor(sq), Tensor(sq), Tensor(sq), Tensor({d_model}),
                     Tensor({d_model})};
}

AlignmentScore cosine_align(const Tensor& cls_embed, const Tensor& f_text,
                            std::size_t attribute_id) {
  if (f_text.rank() != 2 || cls_embed.size() != f_text.cols()) {
    throw DimensionError(fmt::format("cosine_align: cls {} vs text {}",
                                     shape_string(cls_embed.shape()),
                                     shape_string(f_text.shape())));
  }
  const Tensor pooled = mean_rows(f_text);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < pooled.size(); ++j) {
    dot += cls_embed[j] * pooled[j];
    na += cls_embed[j] * cls_embed[j];
    nb += pooled[j] * pooled[j];
  }
  if (na == 0.0 || nb == 0.0) {
    throw NumericError(fmt::format("zero-norm embedding in cosine alignment for attribute {}",
                                   attribute_id));
  }
  double score = dot / (std::sqrt(na) * std::sqrt(nb));
  score = std::clamp(score, -1.0, 1.0);
  return AlignmentScore{attribute_id, score};
}

Tensor cross_attention_forward(const Tensor& f_img, const Tensor& f_text, const FusionBlock& w,
                               std::size_t num_heads, double ln_eps, CrossAttentionTrace* trace) {
  if (f_img.rank() != 2 || f_text.rank() != 2 || f_img.cols() != f_text.cols() ||
      w.wq.shape() != Shape{f_img.cols(), f_img.cols()}) {
    throw DimensionError(fmt::format("cross attention: image {} text {} projection {}",
                                     shape_string(f_img.shape()), shape_string(f_text.shape()),
                                     shape_string(w.wq.shape())));
  }
  head_width(f_img.cols(), num_heads);

  CrossAttentionTrace local;
  CrossAttentionTrace& t = trace ? *trace : local;
  t.q = matmul(f_img, w.wq);
  t.k = matmul(f_text, w.wk);
  t.v = matmul(f_text, w.wv);
  t.concat = multi_head_attention(t.q, t.k, t.v, num_heads, /*causal=*/false, &t.probs);
  Tensor residual = matmul(t.concat, w.wo);
  add_inplace(residual, f_img);
  t.normalized = normalize_rows(residual, ln_eps, &t.inv_std);
  t.out = t.normalized;
  const std::size_t d = f_img.cols();
  for (std::size_t r = 0; r < t.out.rows(); ++r) {
    auto row = t.out.row(r);
    for (std::size_t j = 0; j < d; ++j) row[j] = row[j] * w.ln_gamma[j] + w.ln_beta[j];
  }
  if (!all_finite(t.out)) throw NumericError("non-finite value in cross-attention output");
  return t.out;
}

std::vector<Tensor> fuse_all(const Tensor& f_img, const std::vector<Tensor>& f_texts,
                             const std::vector<FusionBlock>& blocks, std::size_t num_heads,
                             double ln_eps) {
  if (f_texts.size() != blocks.size()) {
    throw ConfigError(fmt::format("{} prompt feature sets for {} fusion blocks", f_texts.size(),
                                  blocks.size()));
  }
  std::vector<Tensor> out;
  out.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    out.push_back(cross_attention_forward(f_img, f_texts[i], blocks[i], num_heads, ln_eps));
  return out;
}

}  // namespace vlmpar
