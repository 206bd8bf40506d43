#include "vlmpar/heads.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

void validate_attributes(const std::vector<AttributeSpec>& specs) {
  if (specs.empty()) throw ConfigError("at least one attribute is required");
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (s.name.empty()) throw ConfigError("attribute with empty name");
    if (!names.insert(s.name).second) throw ConfigError("duplicate attribute name '" + s.name + "'");
    if (s.num_classes < 2) {
      throw ConfigError(fmt::format("attribute '{}' needs at least 2 classes", s.name));
    }
    if (s.prompt.empty()) throw ConfigError(fmt::format("attribute '{}' has no prompt", s.name));
  }
}

HeadWeights HeadWeights::initialize(std::size_t d_model, std::size_t num_classes,
                                    std::uint64_t seed) {
  HeadWeights h;
  h.w = seeded_normal({d_model, num_classes}, derive_seed(seed, "w"),
                      1.0 / std::sqrt(static_cast<double>(d_model)));
  h.b = Tensor({num_classes}, 0.0);
  return h;
}

void LossConfig::validate() const {
  if (lambda_ce < 0.0 || lambda_focal < 0.0 || !(lambda_ce + lambda_focal > 0.0)) {
    throw ConfigError("loss weights must be nonnegative with a positive sum");
  }
  if (focal_gamma < 0.0) throw ConfigError("focal_gamma must be nonnegative");
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("smoothing must lie in [0, 1)");
}

Tensor pool(const Tensor& h) {
  if (h.rank() != 2 || h.rows() == 0) throw DimensionError("pool expects an N x d matrix");
  return mean_rows(h);
}

HeadOutput head_forward(const Tensor& pooled, const HeadWeights& w) {
  if (pooled.rank() != 1 || w.w.rank() != 2 || w.w.rows() != pooled.size() ||
      w.b.size() != w.w.cols()) {
    throw DimensionError(fmt::format("head: pooled {} weights {} bias {}",
                                     shape_string(pooled.shape()), shape_string(w.w.shape()),
                                     shape_string(w.b.shape())));
  }
  const std::size_t k = w.w.cols();
  HeadOutput out;
  out.logits = matmul(pooled.reshaped({1, pooled.size()}), w.w).reshaped({k});
  add_inplace(out.logits, w.b);
  out.probs = softmax_rows(out.logits);
  return out;
}

Prediction predict(const Tensor& probs) {
  if (probs.empty()) throw DimensionError("predict on an empty distribution");
  Prediction p{0, probs[0]};
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > p.confidence) p = {k, probs[k]};
  }
  return p;
}

double attribute_loss(const Tensor& probs, std::size_t label, const LossConfig& cfg) {
  const std::size_t k = probs.size();
  if (label >= k) throw InputError(fmt::format("label {} outside {} classes", label, k));
  double loss = 0.0;
  if (cfg.lambda_ce != 0.0) {
    const double off = k > 1 ? cfg.smoothing / static_cast<double>(k - 1) : 0.0;
    double ce = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double q = c == label ? 1.0 - cfg.smoothing : off;
      if (q != 0.0) ce -= q * std::log(std::max(probs[c], kProbFloor));
    }
    loss += cfg.lambda_ce * ce;
  }
  if (cfg.lambda_focal != 0.0) {
    const double py = probs[label];
    const double weight = cfg.focal_gamma == 0.0 ? 1.0 : std::pow(1.0 - py, cfg.focal_gamma);
    loss += cfg.lambda_focal * (-weight * std::log(std::max(py, kProbFloor)));
  }
  return loss;
}

double total_loss(const std::vector<double>& losses) {
  if (losses.empty()) throw ConfigError("total_loss over zero attributes");
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

}  // namespace vlmpar
