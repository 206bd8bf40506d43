#include "vlmpar/encoders.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "vlmpar/attention.hpp"
#include "vlmpar/error.hpp"

namespace vlmpar {

void EncoderConfig::validate() const {
  if (d_model == 0 || num_heads == 0 || mlp_hidden == 0 || patch_size == 0 || image_hw == 0 ||
      max_tokens == 0 || vocab_size == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (d_model % num_heads != 0) {
    throw ConfigError(fmt::format("d_model {} not divisible by num_heads {}", d_model, num_heads));
  }
  if (image_hw % patch_size != 0) {
    throw ConfigError(
        fmt::format("image_hw {} not divisible by patch_size {}", image_hw, patch_size));
  }
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
}

namespace {

EncoderLayerWeights init_layer(const EncoderConfig& cfg, std::uint64_t seed,
                               const std::string& prefix) {
  const std::size_t d = cfg.d_model;
  auto normal = [&](const char* name, Shape shape) {
    return seeded_normal(shape, derive_seed(seed, prefix + name), cfg.init_scale);
  };
  EncoderLayerWeights l;
  l.wq = normal("wq", {d, d});
  l.wk = normal("wk", {d, d});
  l.wv = normal("wv", {d, d});
  l.wo = normal("wo", {d, d});
  l.ln1_gamma = Tensor({d}, 1.0);
  l.ln1_beta = Tensor({d}, 0.0);
  l.mlp_in = normal("mlp_in", {d, cfg.mlp_hidden});
  l.mlp_out = normal("mlp_out", {cfg.mlp_hidden, d});
  l.ln2_gamma = Tensor({d}, 1.0);
  l.ln2_beta = Tensor({d}, 0.0);
  return l;
}

template <typename LayerT, typename Fn>
void visit_layer(const std::string& prefix, LayerT& l, Fn&& fn) {
  fn(prefix + "wq", l.wq);
  fn(prefix + "wk", l.wk);
  fn(prefix + "wv", l.wv);
  fn(prefix + "wo", l.wo);
  fn(prefix + "ln1_gamma", l.ln1_gamma);
  fn(prefix + "ln1_beta", l.ln1_beta);
  fn(prefix + "mlp_in", l.mlp_in);
  fn(prefix + "mlp_out", l.mlp_out);
  fn(prefix + "ln2_gamma", l.ln2_gamma);
  fn(prefix + "ln2_beta", l.ln2_beta);
}

template <typename W, typename Fn>
void visit_all(W& w, Fn&& fn) {
  fn("vision.patch_proj", w.vision.patch_proj);
  fn("vision.pos", w.vision.pos);
  fn("vision.cls", w.vision.cls);
  for (std::size_t i = 0; i < w.vision.layers.size(); ++i)
    visit_layer(fmt::format("vision.layer{}.", i), w.vision.layers[i], fn);
  fn("text.token_table", w.text.token_table);
  fn("text.pos", w.text.pos);
  for (std::size_t i = 0; i < w.text.layers.size(); ++i)
    visit_layer(fmt::format("text.layer{}.", i), w.text.layers[i], fn);
}

Tensor attention_block(const Tensor& h, const EncoderLayerWeights& l, std::size_t heads,
                       bool causal) {
  const Tensor q = matmul(h, l.wq);
  const Tensor k = matmul(h, l.wk);
  const Tensor v = matmul(h, l.wv);
  return matmul(multi_head_attention(q, k, v, heads, causal), l.wo);
}

void require_shape(const Tensor& t, const Shape& expected, const std::string& name) {
  if (t.shape() != expected) {
    throw DimensionError(fmt::format("{} has shape {}, expected {}", name,
                                     shape_string(t.shape()), shape_string(expected)));
  }
}

}  // namespace

EncoderWeights EncoderWeights::initialize(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t n = cfg.num_patches();
  EncoderWeights w;
  w.vision.patch_proj =
      seeded_normal({d, cfg.patch_dim()}, derive_seed(seed, "vision.patch_proj"), cfg.init_scale);
  w.vision.pos = seeded_normal({n + 1, d}, derive_seed(seed, "vision.pos"), cfg.init_scale);
  w.vision.cls = seeded_normal({d}, derive_seed(seed, "vision.cls"), cfg.init_scale);
  for (std::size_t i = 0; i < cfg.num_layers; ++i)
    w.vision.layers.push_back(init_layer(cfg, seed, fmt::format("vision.layer{}.", i)));
  w.text.token_table =
      seeded_normal({cfg.vocab_size, d}, derive_seed(seed, "text.token_table"), cfg.init_scale);
  w.text.pos = seeded_normal({cfg.max_tokens, d}, derive_seed(seed, "text.pos"), cfg.init_scale);
  for (std::size_t i = 0; i < cfg.num_layers; ++i)
    w.text.layers.push_back(init_layer(cfg, seed, fmt::format("text.layer{}.", i)));
  w.visit_mut([](const std::string&, Tensor& t) { round_to_float32(t); });
  return w;
}

void EncoderWeights::visit(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_all(*this, fn);
}

void EncoderWeights::visit_mut(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_all(*this, fn);
}

std::uint64_t EncoderWeights::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  visit([&](const std::string& name, const Tensor& t) {
    mix_bytes(name.data(), name.size());
    for (auto d : t.shape()) {
      const auto d64 = static_cast<std::uint64_t>(d);
      mix_bytes(&d64, sizeof d64);
    }
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      mix_bytes(&bits, sizeof bits);
    }
  });
  return h;
}

void EncoderWeights::check_shapes(const EncoderConfig& cfg) const {
  const std::size_t d = cfg.d_model;
  require_shape(vision.patch_proj, {d, cfg.patch_dim()}, "vision.patch_proj");
  require_shape(vision.pos, {cfg.num_patches() + 1, d}, "vision.pos");
  require_shape(vision.cls, {d}, "vision.cls");
  require_shape(text.token_table, {cfg.vocab_size, d}, "text.token_table");
  require_shape(text.pos, {cfg.max_tokens, d}, "text.pos");
  if (vision.layers.size() != cfg.num_layers || text.layers.size() != cfg.num_layers) {
    throw DimensionError(fmt::format("expected {} encoder layers", cfg.num_layers));
  }
  auto check_layer = [&](const EncoderLayerWeights& l, const std::string& p) {
    visit_layer(p, l, [&](const std::string& name, const Tensor& t) {
      Shape expected{d, d};
      if (name.ends_with("gamma") || name.ends_with("beta")) expected = {d};
      if (name.ends_with("mlp_in")) expected = {d, cfg.mlp_hidden};
      if (name.ends_with("mlp_out")) expected = {cfg.mlp_hidden, d};
      require_shape(t, expected, name);
    });
  };
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    check_layer(vision.layers[i], fmt::format("vision.layer{}.", i));
    check_layer(text.layers[i], fmt::format("text.layer{}.", i));
  }
}

std::string checksum_hex(std::uint64_t checksum) { return fmt::format("{:016x}", checksum); }

// ---- vision ----------------------------------------------------------------

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("image must be H x W x 3, got " + shape_string(image.shape()));
  }
  const std::size_t height = image.dim(0), width = image.dim(1);
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError(fmt::format("image {}x{} not divisible into {}-pixel patches", height,
                                  width, patch_size));
  }
  const std::size_t gh = height / patch_size, gw = width / patch_size;
  const std::size_t pdim = patch_size * patch_size * 3;
  Tensor out({gh * gw, pdim});
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      auto row = out.row(py * gw + px);
      std::size_t k = 0;
      for (std::size_t y = 0; y < patch_size; ++y) {
        const std::size_t src =
            ((py * patch_size + y) * width + px * patch_size) * 3;
        for (std::size_t x = 0; x < patch_size * 3; ++x) row[k++] = image[src + x];
      }
    }
  }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t patch_size) {
  const std::size_t gh = height / patch_size, gw = width / patch_size;
  if (patches.rank() != 2 || patches.rows() != gh * gw ||
      patches.cols() != patch_size * patch_size * 3) {
    throw DimensionError("patch matrix does not match image geometry");
  }
  Tensor image({height, width, 3});
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      auto row = patches.row(py * gw + px);
      std::size_t k = 0;
      for (std::size_t y = 0; y < patch_size; ++y) {
        const std::size_t dst = ((py * patch_size + y) * width + px * patch_size) * 3;
        for (std::size_t x = 0; x < patch_size * 3; ++x) image[dst + x] = row[k++];
      }
    }
  }
  return image;
}

Tensor embed_patches(const Tensor& patches, const VisionWeights& weights) {
  if (patches.rank() != 2 || weights.patch_proj.rank() != 2 ||
      patches.cols() != weights.patch_proj.cols() ||
      weights.pos.rows() != patches.rows() + 1) {
    throw DimensionError(fmt::format("patches {} vs projection {} and positions {}",
                                     shape_string(patches.shape()),
                                     shape_string(weights.patch_proj.shape()),
                                     shape_string(weights.pos.shape())));
  }
  const std::size_t d = weights.patch_proj.rows();
  const Tensor projected = matmul_nt(patches, weights.patch_proj);
  Tensor out({patches.rows() + 1, d});
  for (std::size_t j = 0; j < d; ++j) out.at(0, j) = weights.cls[j] + weights.pos.at(0, j);
  for (std::size_t p = 0; p < patches.rows(); ++p)
    for (std::size_t j = 0; j < d; ++j)
      out.at(p + 1, j) = projected.at(p, j) + weights.pos.at(p + 1, j);
  return out;
}

Tensor encoder_layer_forward(const Tensor& h, const EncoderLayerWeights& layer,
                             std::size_t num_heads, bool causal, double ln_eps) {
  if (h.rank() != 2 || h.rows() == 0) throw DimensionError("encoder layer input must be L x d");
  Tensor attn = attention_block(h, layer, num_heads, causal);
  add_inplace(attn, h);
  const Tensor h1 = layer_norm(attn, layer.ln1_gamma, layer.ln1_beta, ln_eps);
  Tensor mlp = matmul(gelu(matmul(h1, layer.mlp_in)), layer.mlp_out);
  add_inplace(mlp, h1);
  return layer_norm(mlp, layer.ln2_gamma, layer.ln2_beta, ln_eps);
}

Tensor vision_tokens(const Tensor& image, const EncoderConfig& cfg,
                     const VisionWeights& weights) {
  if (image.rank() != 3 || image.dim(0) != cfg.image_hw || image.dim(1) != cfg.image_hw) {
    throw DimensionError(fmt::format("image shape {} does not match configured {}x{}x3",
                                     shape_string(image.shape()), cfg.image_hw, cfg.image_hw));
  }
  Tensor h = embed_patches(patchify(image, cfg.patch_size), weights);
  for (const auto& layer : weights.layers)
    h = encoder_layer_forward(h, layer, cfg.num_heads, /*causal=*/false, cfg.ln_eps);
  return h;
}

VisionOutput vision_forward(const Tensor& image, const EncoderConfig& cfg,
                            const VisionWeights& weights) {
  const Tensor tokens = vision_tokens(image, cfg, weights);
  VisionOutput out;
  out.cls = slice_rows(tokens, 0, 1).reshaped({tokens.cols()});
  out.patches = slice_rows(tokens, 1, tokens.rows() - 1);
  return out;
}

// ---- text ------------------------------------------------------------------

Tensor text_forward(const std::vector<std::uint32_t>& ids, const EncoderConfig& cfg,
                    const TextWeights& weights) {
  if (ids.empty() || ids.size() > cfg.max_tokens) {
    throw InputError(fmt::format("prompt length {} outside [1, {}]", ids.size(), cfg.max_tokens));
  }
  const std::size_t d = cfg.d_model;
  const std::size_t vocab = weights.token_table.rows();
  Tensor h({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= vocab) {
      throw InputError(fmt::format("token id {} at position {} outside vocabulary of {}", ids[t],
                                   t, vocab));
    }
    auto emb = weights.token_table.row(ids[t]);
    auto pos = weights.pos.row(t);
    auto row = h.row(t);
    for (std::size_t j = 0; j < d; ++j) row[j] = emb[j] + pos[j];
  }
  for (const auto& layer : weights.layers)
    h = encoder_layer_forward(h, layer, cfg.num_heads, /*causal=*/true, cfg.ln_eps);
  return h;
}

}  // namespace vlmpar
