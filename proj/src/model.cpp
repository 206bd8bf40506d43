#include "vlmpar/model.hpp"

#include <fmt/format.h>

#include "vlmpar/attention.hpp"
#include "vlmpar/error.hpp"

namespace vlmpar {

void ModelConfig::validate() const {
  encoder.validate();
  head_width(encoder.d_model, fusion_heads);
  if (!(fusion_ln_eps > 0.0)) throw ConfigError("fusion_ln_eps must be positive");
  validate_attributes(attributes);
}

std::string to_string(AblationMode mode) {
  return mode == AblationMode::kFull ? "full" : "no_cross_attention";
}

AblationMode parse_ablation(const std::string& text) {
  if (text == "full") return AblationMode::kFull;
  if (text == "no_cross_attention") return AblationMode::kNoCrossAttention;
  throw ConfigError("unknown ablation mode '" + text + "'");
}

TrainableWeights TrainableWeights::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  TrainableWeights w;
  const std::size_t d = cfg.encoder.d_model;
  for (std::size_t i = 0; i < cfg.attributes.size(); ++i) {
    w.fusion.push_back(FusionBlock::initialize(d, derive_seed(seed, fmt::format("fusion{}", i))));
    w.heads.push_back(HeadWeights::initialize(d, cfg.attributes[i].num_classes,
                                              derive_seed(seed, fmt::format("head{}", i))));
  }
  return w;
}

TrainableWeights TrainableWeights::zeros_like(const TrainableWeights& w, bool include_fusion) {
  TrainableWeights z;
  if (include_fusion) z.fusion = w.fusion;
  z.heads = w.heads;
  z.visit_mut([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

namespace {

template <typename W, typename Fn>
void visit_trainable(W& w, Fn&& fn) {
  for (std::size_t i = 0; i < w.fusion.size(); ++i) {
    auto& b = w.fusion[i];
    const std::string p = fmt::format("fusion.{}.", i);
    fn(p + "wq", b.wq);
    fn(p + "wk", b.wk);
    fn(p + "wv", b.wv);
    fn(p + "wo", b.wo);
    fn(p + "ln_gamma", b.ln_gamma);
    fn(p + "ln_beta", b.ln_beta);
  }
  for (std::size_t i = 0; i < w.heads.size(); ++i) {
    const std::string p = fmt::format("head.{}.", i);
    fn(p + "w", w.heads[i].w);
    fn(p + "b", w.heads[i].b);
  }
}

}  // namespace

void TrainableWeights::visit(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_trainable(*this, fn);
}

void TrainableWeights::visit_mut(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_trainable(*this, fn);
}

std::size_t TrainableWeights::parameter_count() const {
  std::size_t n = 0;
  visit([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Model Model::create(const ModelConfig& cfg, const Vocab& vocab, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.encoders = EncoderWeights::initialize(cfg.encoder, derive_seed(seed, "encoders"));
  m.trainable = TrainableWeights::initialize(cfg, derive_seed(seed, "trainable"));
  m.tokenize_prompts(vocab);
  return m;
}

void Model::tokenize_prompts(const Vocab& vocab) {
  if (vocab.size() > config.encoder.vocab_size) {
    throw ConfigError(fmt::format("vocabulary of {} tokens exceeds vocab_size {}", vocab.size(),
                                  config.encoder.vocab_size));
  }
  prompt_ids.clear();
  for (const auto& a : config.attributes)
    prompt_ids.push_back(tokenize(a.prompt, vocab, config.encoder.max_tokens));
}

ImageFeatures encode_image(const Model& model, const Tensor& image) {
  auto out = vision_forward(image, model.config.encoder, model.encoders.vision);
  round_to_float32(out.cls);
  round_to_float32(out.patches);
  return ImageFeatures{std::move(out.cls), std::move(out.patches)};
}

std::vector<Tensor> encode_prompts(const Model& model) {
  std::vector<Tensor> out;
  for (const auto& ids : model.prompt_ids) {
    Tensor t = text_forward(ids, model.config.encoder, model.encoders.text);
    round_to_float32(t);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<AttributeOutput> forward(const Model& model, const ImageFeatures& image,
                                     const std::vector<Tensor>& text, AblationMode mode) {
  const std::size_t a = model.config.attributes.size();
  if (model.trainable.heads.size() != a) throw ConfigError("head count does not match attributes");
  std::vector<AttributeOutput> out(a);
  if (mode == AblationMode::kNoCrossAttention) {
    const Tensor pooled = pool(image.patches);
    for (std::size_t i = 0; i < a; ++i) {
      out[i].head = head_forward(pooled, model.trainable.heads[i]);
      out[i].prediction = predict(out[i].head.probs);
    }
    return out;
  }
  if (model.trainable.fusion.size() != a || text.size() != a) {
    throw ConfigError(fmt::format("full model needs {} fusion blocks and prompts, got {} and {}",
                                  a, model.trainable.fusion.size(), text.size()));
  }
  const auto fused = fuse_all(image.patches, text, model.trainable.fusion,
                              model.config.fusion_heads, model.config.fusion_ln_eps);
  for (std::size_t i = 0; i < a; ++i) {
    out[i].head = head_forward(pool(fused[i]), model.trainable.heads[i]);
    out[i].prediction = predict(out[i].head.probs);
  }
  return out;
}

}  // namespace vlmpar
