#include "vlmpar/attention.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

std::size_t head_width(std::size_t d_model, std::size_t num_heads) {
  if (num_heads == 0 || d_model % num_heads != 0) {
    throw ConfigError(fmt::format("d_model {} not divisible by {} heads", d_model, num_heads));
  }
  return d_model / num_heads;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t num_heads, bool causal, std::vector<Tensor>* probs) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() ||
      q.cols() != k.cols()) {
    throw DimensionError(fmt::format("attention with q {} k {} v {}", shape_string(q.shape()),
                                     shape_string(k.shape()), shape_string(v.shape())));
  }
  const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols();
  const std::size_t dk = head_width(d, num_heads);
  if (causal && lq != lk) throw DimensionError("causal attention needs equal lengths");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor out({lq, d});
  if (probs) probs->assign(num_heads, Tensor({lq, lk}));
  std::vector<double> w(lk);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t c0 = h * dk;
    for (std::size_t t = 0; t < lq; ++t) {
      const std::size_t visible = causal ? t + 1 : lk;
      auto qrow = q.row(t);
      double mx = -INFINITY;
      for (std::size_t s = 0; s < visible; ++s) {
        auto krow = k.row(s);
        double dot = 0.0;
        for (std::size_t j = 0; j < dk; ++j) dot += qrow[c0 + j] * krow[c0 + j];
        w[s] = dot * scale;
        mx = std::max(mx, w[s]);
      }
      double sum = 0.0;
      for (std::size_t s = 0; s < visible; ++s) {
        w[s] = std::exp(w[s] - mx);
        sum += w[s];
      }
      auto orow = out.row(t);
      for (std::size_t s = 0; s < visible; ++s) {
        w[s] /= sum;
        auto vrow = v.row(s);
        for (std::size_t j = 0; j < dk; ++j) orow[c0 + j] += w[s] * vrow[c0 + j];
      }
      if (probs) {
        for (std::size_t s = 0; s < visible; ++s) (*probs)[h].at(t, s) = w[s];
      }
    }
  }
  return out;
}

}  // namespace vlmpar
