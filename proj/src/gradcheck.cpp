#include "vlmpar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "vlmpar/error.hpp"
#include "vlmpar/training.hpp"

namespace vlmpar {

namespace {

Tensor* find_tensor(TrainableWeights& w, const std::string& name) {
  Tensor* found = nullptr;
  w.visit_mut([&](const std::string& n, Tensor& t) {
    if (n == name) found = &t;
  });
  return found;
}

std::vector<std::size_t> pick_entries(std::size_t size, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= size) return idx;
  Prng rng(seed);
  for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult gradient_check(const Model& model, const EncodedDataset& data,
                               const LossConfig& loss_cfg, AblationMode mode,
                               const GradCheckOptions& options) {
  std::vector<std::size_t> batch(data.samples.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  BatchResult analytic = forward_backward(model, data, batch, loss_cfg, mode);
  if (options.corrupt_gradient) {
    bool done = false;
    analytic.grads.visit_mut([&](const std::string&, Tensor& g) {
      if (!done && !g.empty()) {
        g[0] = g[0] * 1.5 + 1e-3;
        done = true;
      }
    });
  }

  Model probe = model;
  GradCheckResult result;
  std::vector<std::pair<std::string, const Tensor*>> grads;
  analytic.grads.visit([&](const std::string& name, const Tensor& g) { grads.emplace_back(name, &g); });

  for (const auto& [name, g] : grads) {
    Tensor* param = find_tensor(probe.trainable, name);
    if (!param) throw ConfigError("gradient for unknown parameter " + name);
    GradCheckGroup group{name, 0, 0.0};
    for (std::size_t i : pick_entries(param->size(), options.max_entries_per_tensor,
                                      derive_seed(options.seed, name))) {
      const double saved = (*param)[i];
      (*param)[i] = saved + options.step;
      const double up = batch_loss(probe, data, batch, loss_cfg, mode);
      (*param)[i] = saved - options.step;
      const double down = batch_loss(probe, data, batch, loss_cfg, mode);
      (*param)[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = (*g)[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < options.abs_floor ? 0.0 : std::abs(a - numeric) / scale;
      group.max_rel_error = std::max(group.max_rel_error, err);
      ++group.checked;
    }
    result.max_rel_error = std::max(result.max_rel_error, group.max_rel_error);
    result.groups.push_back(group);
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

GradCheckProblem make_gradcheck_problem(const ModelConfig& cfg, std::uint64_t seed,
                                        std::size_t num_samples, std::size_t prompt_length) {
  if (num_samples == 0) throw ConfigError("gradient check needs at least one sample");
  const std::size_t length = std::min(prompt_length, cfg.encoder.max_tokens);
  if (length == 0) throw ConfigError("gradient check needs a positive prompt length");

  std::vector<std::string> tokens{"<unk>"};
  for (std::size_t i = 1; i < std::min<std::size_t>(cfg.encoder.vocab_size, 8); ++i)
    tokens.push_back(fmt::format("w{}", i));
  GradCheckProblem p{Model::create(cfg, Vocab(tokens), seed), {}};

  Prng rng(derive_seed(seed, "gradcheck"));
  for (auto& ids : p.model.prompt_ids) {
    ids.assign(length, 0);
    for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(cfg.encoder.vocab_size));
  }
  p.data.text = encode_prompts(p.model);
  const std::size_t hw = cfg.encoder.image_hw;
  for (std::size_t s = 0; s < num_samples; ++s) {
    Tensor image({hw, hw, 3});
    for (auto& v : image.data()) v = rng.uniform();
    EncodedSample sample;
    sample.id = fmt::format("g{}", s);
    sample.features = encode_image(p.model, image);
    for (const auto& a : cfg.attributes) sample.labels.push_back(rng.below(a.num_classes));
    p.data.samples.push_back(std::move(sample));
  }
  return p;
}

}  // namespace vlmpar
