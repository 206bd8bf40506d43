#include "vlmpar/config.hpp"

#include <fstream>

#include "vlmpar/error.hpp"
#include "vlmpar/json_util.hpp"

namespace vlmpar {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"seed", "model", "loss", "train", "paths"}, "config");
  RunConfig c;
  c.seed = value_or<std::size_t>(j, "seed", c.seed, "config");
  c.train.seed = c.seed;

  if (j.contains("model")) {
    const json& m = j.at("model");
    const std::string ctx = "config.model";
    check_keys(m, {"d_model", "num_layers", "num_heads", "mlp_hidden", "patch_size", "image_hw",
                   "max_tokens", "vocab_size", "ln_eps", "init_scale", "fusion_heads",
                   "fusion_ln_eps", "pooling", "attributes"},
               ctx);
    auto& e = c.model.encoder;
    e.d_model = value_or<std::size_t>(m, "d_model", e.d_model, ctx);
    e.num_layers = value_or<std::size_t>(m, "num_layers", e.num_layers, ctx);
    e.num_heads = value_or<std::size_t>(m, "num_heads", e.num_heads, ctx);
    e.mlp_hidden = value_or<std::size_t>(m, "mlp_hidden", 4 * e.d_model, ctx);
    e.patch_size = value_or<std::size_t>(m, "patch_size", e.patch_size, ctx);
    e.image_hw = value_or<std::size_t>(m, "image_hw", e.image_hw, ctx);
    e.max_tokens = value_or<std::size_t>(m, "max_tokens", e.max_tokens, ctx);
    e.vocab_size = value_or<std::size_t>(m, "vocab_size", e.vocab_size, ctx);
    e.ln_eps = value_or<double>(m, "ln_eps", e.ln_eps, ctx);
    e.init_scale = value_or<double>(m, "init_scale", e.init_scale, ctx);
    c.model.fusion_heads = value_or<std::size_t>(m, "fusion_heads", c.model.fusion_heads, ctx);
    c.model.fusion_ln_eps = value_or<double>(m, "fusion_ln_eps", c.model.fusion_ln_eps, ctx);
    if (value_or<std::string>(m, "pooling", "mean", ctx) != "mean") {
      throw ConfigError("only mean pooling is supported");
    }
    if (m.contains("attributes")) {
      const json& attrs = m.at("attributes");
      if (!attrs.is_array()) throw ConfigError("config.model.attributes must be an array");
      for (const auto& a : attrs) {
        check_keys(a, {"name", "prompt", "num_classes"}, "config.model.attributes entry");
        c.model.attributes.push_back(
            AttributeSpec{required<std::string>(a, "name", ctx), required<std::string>(a, "prompt", ctx),
                          required<std::size_t>(a, "num_classes", ctx)});
      }
      validate_attributes(c.model.attributes);
    }
    c.model.encoder.validate();
  }

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    const std::string ctx = "config.loss";
    check_keys(l, {"lambda_ce", "lambda_focal", "focal_gamma", "smoothing"}, ctx);
    c.loss.lambda_ce = value_or<double>(l, "lambda_ce", c.loss.lambda_ce, ctx);
    c.loss.lambda_focal = value_or<double>(l, "lambda_focal", c.loss.lambda_focal, ctx);
    c.loss.focal_gamma = value_or<double>(l, "focal_gamma", c.loss.focal_gamma, ctx);
    c.loss.smoothing = value_or<double>(l, "smoothing", c.loss.smoothing, ctx);
  }
  c.loss.validate();

  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string ctx = "config.train";
    check_keys(t, {"epochs", "batch_size", "learning_rate", "optimizer", "adam_beta1",
                   "adam_beta2", "adam_eps", "seed", "ablation", "threads"},
               ctx);
    auto& tr = c.train;
    tr.epochs = value_or<std::size_t>(t, "epochs", tr.epochs, ctx);
    tr.batch_size = value_or<std::size_t>(t, "batch_size", tr.batch_size, ctx);
    tr.learning_rate = value_or<double>(t, "learning_rate", tr.learning_rate, ctx);
    tr.optimizer = parse_optimizer(value_or<std::string>(t, "optimizer", "adam", ctx));
    tr.adam_beta1 = value_or<double>(t, "adam_beta1", tr.adam_beta1, ctx);
    tr.adam_beta2 = value_or<double>(t, "adam_beta2", tr.adam_beta2, ctx);
    tr.adam_eps = value_or<double>(t, "adam_eps", tr.adam_eps, ctx);
    tr.seed = value_or<std::size_t>(t, "seed", tr.seed, ctx);
    tr.ablation = parse_ablation(value_or<std::string>(t, "ablation", "full", ctx));
    tr.threads = value_or<std::size_t>(t, "threads", tr.threads, ctx);
  }
  c.train.validate();

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    const std::string ctx = "config.paths";
    check_keys(p, {"data", "eval_data", "vocab", "weights_in", "weights_out", "report_out",
                   "cache"},
               ctx);
    auto& ps = c.paths;
    ps.data = value_or<std::string>(p, "data", "", ctx);
    ps.eval_data = value_or<std::string>(p, "eval_data", "", ctx);
    ps.vocab = value_or<std::string>(p, "vocab", "", ctx);
    ps.weights_in = value_or<std::string>(p, "weights_in", "", ctx);
    ps.weights_out = value_or<std::string>(p, "weights_out", "", ctx);
    ps.report_out = value_or<std::string>(p, "report_out", "", ctx);
    ps.cache = value_or<std::string>(p, "cache", "", ctx);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  const auto& e = model.encoder;
  ordered_json attrs = ordered_json::array();
  for (const auto& a : model.attributes)
    attrs.push_back(ordered_json{{"name", a.name}, {"prompt", a.prompt}, {"num_classes", a.num_classes}});
  return ordered_json{
      {"seed", seed},
      {"model",
       {{"d_model", e.d_model},
        {"num_layers", e.num_layers},
        {"num_heads", e.num_heads},
        {"mlp_hidden", e.mlp_hidden},
        {"patch_size", e.patch_size},
        {"image_hw", e.image_hw},
        {"max_tokens", e.max_tokens},
        {"vocab_size", e.vocab_size},
        {"ln_eps", e.ln_eps},
        {"init_scale", e.init_scale},
        {"fusion_heads", model.fusion_heads},
        {"fusion_ln_eps", model.fusion_ln_eps},
        {"pooling", "mean"},
        {"attributes", attrs}}},
      {"loss",
       {{"lambda_ce", loss.lambda_ce},
        {"lambda_focal", loss.lambda_focal},
        {"focal_gamma", loss.focal_gamma},
        {"smoothing", loss.smoothing}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"optimizer", to_string(train.optimizer)},
        {"adam_beta1", train.adam_beta1},
        {"adam_beta2", train.adam_beta2},
        {"adam_eps", train.adam_eps},
        {"seed", train.seed},
        {"ablation", to_string(train.ablation)},
        {"threads", train.threads}}},
      {"paths",
       {{"data", paths.data},
        {"eval_data", paths.eval_data},
        {"vocab", paths.vocab},
        {"weights_in", paths.weights_in},
        {"weights_out", paths.weights_out},
        {"report_out", paths.report_out},
        {"cache", paths.cache}}}};
}

}  // namespace vlmpar
