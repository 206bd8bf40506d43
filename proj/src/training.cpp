#include "vlmpar/training.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <string_view>

#include <fmt/format.h>

#include "vlmpar/attention.hpp"
#include "vlmpar/error.hpp"
#include "vlmpar/metrics.hpp"
#include "vlmpar/parallel.hpp"

namespace vlmpar {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

Tensor loss_logit_gradient(const Tensor& probs, std::size_t label, const LossConfig& cfg) {
  const std::size_t k = probs.size();
  if (label >= k) throw InputError(fmt::format("label {} outside {} classes", label, k));
  Tensor grad({k});
  if (cfg.lambda_ce != 0.0) {
    // Smoothed targets sum to one, so d(CE)/dz = p - q.
    const double off = cfg.smoothing / static_cast<double>(k - 1);
    for (std::size_t c = 0; c < k; ++c) {
      const double q = c == label ? 1.0 - cfg.smoothing : off;
      grad[c] += cfg.lambda_ce * (probs[c] - q);
    }
  }
  if (cfg.lambda_focal != 0.0) {
    // FL = -(1 - p_y)^g ln p_y;  dFL/dz_c = coef * (delta_cy - p_c).
    const double py = probs[label];
    const double g = cfg.focal_gamma;
    const double rest = 1.0 - py;
    const double weight = g == 0.0 ? 1.0 : std::pow(rest, g);
    double coef = -weight;
    if (g != 0.0 && rest > 0.0) {
      coef += g * std::pow(rest, g - 1.0) * py * std::log(std::max(py, kProbFloor));
    }
    for (std::size_t c = 0; c < k; ++c) {
      const double delta = c == label ? 1.0 : 0.0;
      grad[c] += cfg.lambda_focal * coef * (delta - probs[c]);
    }
  }
  return grad;
}

namespace {

struct SampleResult {
  double loss = 0.0;
  GradientSet grads;
};

// Backward through h = LN(concat * W_O + f_img) and the attention heads.
void fusion_backward(const CrossAttentionTrace& t, const Tensor& f_img, const Tensor& f_text,
                     const FusionBlock& w, std::size_t num_heads, const Tensor& d_out,
                     FusionBlock& g) {
  const std::size_t n = d_out.rows(), d = d_out.cols();

  Tensor d_res({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    auto xhat = t.normalized.row(r);
    auto dy = d_out.row(r);
    double mean_dx = 0.0, mean_dx_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      g.ln_gamma[j] += dy[j] * xhat[j];
      g.ln_beta[j] += dy[j];
      const double dx = dy[j] * w.ln_gamma[j];
      mean_dx += dx;
      mean_dx_xhat += dx * xhat[j];
    }
    mean_dx /= static_cast<double>(d);
    mean_dx_xhat /= static_cast<double>(d);
    auto out = d_res.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double dx = dy[j] * w.ln_gamma[j];
      out[j] = t.inv_std[r] * (dx - mean_dx - xhat[j] * mean_dx_xhat);
    }
  }

  add_inplace(g.wo, matmul_tn(t.concat, d_res));
  const Tensor d_concat = matmul_nt(d_res, w.wo);

  const std::size_t dk = head_width(d, num_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor dq({n, d}), dk_full({t.k.rows(), d}), dv({t.v.rows(), d});
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t c0 = h * dk;
    const Tensor& a = t.probs[h];
    const Tensor d_head = slice_cols(d_concat, c0, dk);
    const Tensor qh = slice_cols(t.q, c0, dk);
    const Tensor kh = slice_cols(t.k, c0, dk);
    const Tensor vh = slice_cols(t.v, c0, dk);

    set_cols(dv, c0, matmul_tn(a, d_head));
    Tensor ds = matmul_nt(d_head, vh);  // dL/dA
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      auto arow = a.row(r);
      auto drow = ds.row(r);
      double dot = 0.0;
      for (std::size_t s = 0; s < drow.size(); ++s) dot += arow[s] * drow[s];
      for (std::size_t s = 0; s < drow.size(); ++s) drow[s] = arow[s] * (drow[s] - dot) * scale;
    }
    set_cols(dq, c0, matmul(ds, kh));
    set_cols(dk_full, c0, matmul_tn(ds, qh));
  }
  add_inplace(g.wq, matmul_tn(f_img, dq));
  add_inplace(g.wk, matmul_tn(f_text, dk_full));
  add_inplace(g.wv, matmul_tn(f_text, dv));
}

void head_backward(const Tensor& pooled, const HeadWeights& w, const Tensor& dz, HeadWeights& g,
                   Tensor* d_pooled) {
  const std::size_t d = pooled.size(), k = dz.size();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < k; ++c) g.w.at(r, c) += pooled[r] * dz[c];
  add_inplace(g.b, dz);
  if (d_pooled) {
    *d_pooled = Tensor({d});
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += w.w.at(r, c) * dz[c];
      (*d_pooled)[r] = s;
    }
  }
}

SampleResult sample_forward_backward(const Model& model, const EncodedSample& sample,
                                     const std::vector<Tensor>& text, const LossConfig& cfg,
                                     AblationMode mode, bool with_grads) {
  const auto& attrs = model.config.attributes;
  const std::size_t a = attrs.size();
  const bool full = mode == AblationMode::kFull;
  if (sample.labels.size() != a) {
    throw InputError(fmt::format("sample '{}' has {} labels for {} attributes", sample.id,
                                 sample.labels.size(), a));
  }
  if (full && (model.trainable.fusion.size() != a || text.size() != a)) {
    throw ConfigError("full mode requires one fusion block and prompt per attribute");
  }
  SampleResult res;
  if (with_grads) res.grads = TrainableWeights::zeros_like(model.trainable, full);
  const Tensor& f_img = sample.features.patches;
  const double inv_a = 1.0 / static_cast<double>(a);

  std::vector<double> losses(a);
  const Tensor raw_pooled = full ? Tensor() : pool(f_img);
  for (std::size_t i = 0; i < a; ++i) {
    CrossAttentionTrace trace;
    const Tensor pooled =
        full ? pool(cross_attention_forward(f_img, text[i], model.trainable.fusion[i],
                                            model.config.fusion_heads,
                                            model.config.fusion_ln_eps, &trace))
             : raw_pooled;
    const HeadOutput head = head_forward(pooled, model.trainable.heads[i]);
    const std::size_t y = sample.labels[i];
    if (y >= attrs[i].num_classes) {
      throw InputError(fmt::format("sample '{}' label {} invalid for attribute '{}'", sample.id,
                                   y, attrs[i].name));
    }
    losses[i] = attribute_loss(head.probs, y, cfg);
    if (!std::isfinite(losses[i])) {
      throw NumericError(fmt::format("non-finite loss for sample '{}' attribute '{}'", sample.id,
                                     attrs[i].name));
    }
    if (!with_grads) continue;

    Tensor dz = loss_logit_gradient(head.probs, y, cfg);
    for (auto& v : dz.data()) v *= inv_a;
    Tensor d_pooled;
    head_backward(pooled, model.trainable.heads[i], dz, res.grads.heads[i],
                  full ? &d_pooled : nullptr);
    if (full) {
      const std::size_t n = f_img.rows();
      Tensor d_h({n, f_img.cols()});
      for (std::size_t r = 0; r < n; ++r) {
        auto row = d_h.row(r);
        for (std::size_t j = 0; j < row.size(); ++j)
          row[j] = d_pooled[j] / static_cast<double>(n);
      }
      fusion_backward(trace, f_img, text[i], model.trainable.fusion[i],
                      model.config.fusion_heads, d_h, res.grads.fusion[i]);
    }
  }
  res.loss = total_loss(losses);
  return res;
}

std::vector<SampleResult> run_batch(const Model& model, const EncodedDataset& data,
                                    std::span<const std::size_t> batch, const LossConfig& cfg,
                                    AblationMode mode, bool with_grads, std::size_t threads) {
  if (batch.empty()) throw InputError("empty batch");
  cfg.validate();
  std::vector<SampleResult> results(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const std::size_t idx = batch[b];
    if (idx >= data.samples.size()) throw InputError(fmt::format("sample index {} out of range", idx));
    results[b] = sample_forward_backward(model, data.samples[idx], data.text, cfg, mode, with_grads);
  });
  return results;
}

}  // namespace

BatchResult forward_backward(const Model& model, const EncodedDataset& data,
                             std::span<const std::size_t> batch, const LossConfig& loss_cfg,
                             AblationMode mode, std::size_t threads) {
  auto results = run_batch(model, data, batch, loss_cfg, mode, true, threads);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  BatchResult out;
  out.grads = TrainableWeights::zeros_like(model.trainable, mode == AblationMode::kFull);
  // Fixed summation order: batch position 0, 1, 2, ...
  for (auto& r : results) {
    out.loss += r.loss;
    std::vector<Tensor*> dst;
    out.grads.visit_mut([&](const std::string&, Tensor& t) { dst.push_back(&t); });
    std::size_t k = 0;
    r.grads.visit([&](const std::string&, const Tensor& t) { add_inplace(*dst[k++], t); });
  }
  out.loss *= inv_b;
  out.grads.visit_mut([&](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v *= inv_b;
  });
  return out;
}

double batch_loss(const Model& model, const EncodedDataset& data,
                  std::span<const std::size_t> batch, const LossConfig& loss_cfg,
                  AblationMode mode) {
  auto results = run_batch(model, data, batch, loss_cfg, mode, false, 1);
  double loss = 0.0;
  for (const auto& r : results) loss += r.loss;
  return loss * (1.0 / static_cast<double>(batch.size()));
}

Optimizer::Optimizer(const TrainConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

void Optimizer::step(TrainableWeights& params, const GradientSet& grads) {
  std::map<std::string, const Tensor*> by_name;
  grads.visit([&](const std::string& name, const Tensor& g) { by_name[name] = &g; });
  ++steps_;
  const double lr = cfg_.learning_rate;
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  params.visit_mut([&](const std::string& name, Tensor& p) {
    auto it = by_name.find(name);
    if (it == by_name.end()) return;
    const Tensor& g = *it->second;
    if (g.shape() != p.shape()) {
      throw DimensionError(fmt::format("gradient for {} has shape {}, parameter {}", name,
                                       shape_string(g.shape()), shape_string(p.shape())));
    }
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      return;
    }
    auto [mit, inserted] = moments_.try_emplace(name);
    if (inserted) mit->second = Moments{Tensor(p.shape()), Tensor(p.shape())};
    Tensor& m = mit->second.m;
    Tensor& v = mit->second.v;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
    }
  });
}

std::vector<std::vector<std::size_t>> predict_labels(const Model& model,
                                                     const EncodedDataset& data,
                                                     AblationMode mode, std::size_t threads) {
  std::vector<std::vector<std::size_t>> out(data.samples.size());
  parallel_for(data.samples.size(), threads, [&](std::size_t s) {
    for (const auto& a : forward(model, data.samples[s].features, data.text, mode))
      out[s].push_back(a.prediction.label);
  });
  return out;
}

std::vector<std::vector<std::size_t>> true_labels(const EncodedDataset& data) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) out.push_back(s.labels);
  return out;
}

std::vector<EpochRecord> train(Model& model, const EncodedDataset& data,
                               const TrainConfig& train_cfg, const LossConfig& loss_cfg) {
  train_cfg.validate();
  loss_cfg.validate();
  std::vector<EpochRecord> history;
  if (train_cfg.epochs == 0) return history;
  if (data.samples.empty()) throw InputError("cannot train on an empty dataset");

  const std::uint64_t frozen = model.encoders.checksum();
  Optimizer optimizer(train_cfg);
  const std::size_t n = data.samples.size();
  const auto labels = true_labels(data);
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Prng rng(derive_seed(train_cfg.seed, fmt::format("shuffle{}", epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += train_cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(train_cfg.batch_size, n - start);
      std::span<const std::size_t> batch(order.data() + start, count);
      try {
        const BatchResult r =
            forward_backward(model, data, batch, loss_cfg, train_cfg.ablation, train_cfg.threads);
        loss_sum += r.loss * static_cast<double>(count);
        optimizer.step(model.trainable, r.grads);
      } catch (const NumericError& e) {
        std::string_view inner = e.what();
        inner.remove_prefix(std::min(inner.size(), std::string_view("numeric error: ").size()));
        throw NumericError(fmt::format("epoch {} batch {}: {}", epoch, batch_index, inner));
      }
    }

    const auto preds = predict_labels(model, data, train_cfg.ablation, train_cfg.threads);
    const auto report = build_report(preds, labels, model.config.attributes);
    history.push_back(EpochRecord{epoch, loss_sum / static_cast<double>(n), report.mean_accuracy,
                                  report.mean_f1});
  }
  if (model.encoders.checksum() != frozen) {
    throw NumericError("encoder weights changed during training");
  }
  return history;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,loss,mA,F1\n";
  for (const auto& r : history) {
    out += fmt::format("{},{},{},{}\n", r.epoch, format_number(r.loss),
                       format_number(r.mean_accuracy), format_number(r.f1));
  }
  return out;
}

}  // namespace vlmpar
