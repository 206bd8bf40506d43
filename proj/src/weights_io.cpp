#include "vlmpar/weights_io.hpp"

#include <fmt/format.h>

#include "vlmpar/error.hpp"

namespace vlmpar {

TensorContainer model_container(const Model& model, bool include_fusion) {
  TensorContainer c(ContainerKind::kWeights);
  model.encoders.visit([&](const std::string& name, const Tensor& t) { c.add("encoder." + name, t); });
  model.trainable.visit([&](const std::string& name, const Tensor& t) {
    if (!include_fusion && name.starts_with("fusion.")) return;
    c.add(name, t);
  });
  return c;
}

namespace {

void copy_checked(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw DimensionError(fmt::format("weights entry '{}' has shape {}, model expects {}", name,
                                     shape_string(src.shape()), shape_string(dst.shape())));
  }
  dst = src;
}

}  // namespace

bool apply_container(Model& model, const TensorContainer& c, bool require_heads) {
  if (c.kind() != ContainerKind::kWeights) throw FormatError("expected a VLMW weights container");
  std::size_t known = 0;

  std::size_t encoder_hits = 0, encoder_total = 0;
  model.encoders.visit_mut([&](const std::string& name, Tensor& t) {
    ++encoder_total;
    if (const Tensor* src = c.find("encoder." + name)) {
      copy_checked(t, *src, "encoder." + name);
      ++encoder_hits;
    }
  });
  if (encoder_hits != 0 && encoder_hits != encoder_total) {
    throw DimensionError(fmt::format("weights hold {} of {} encoder tensors", encoder_hits,
                                     encoder_total));
  }
  known += encoder_hits;

  std::size_t fusion_hits = 0, fusion_total = 0, head_hits = 0, head_total = 0;
  model.trainable.visit_mut([&](const std::string& name, Tensor& t) {
    const bool fusion = name.starts_with("fusion.");
    (fusion ? fusion_total : head_total)++;
    if (const Tensor* src = c.find(name)) {
      copy_checked(t, *src, name);
      (fusion ? fusion_hits : head_hits)++;
    }
  });
  if (fusion_hits != 0 && fusion_hits != fusion_total) {
    throw DimensionError(fmt::format("weights hold {} of {} fusion tensors", fusion_hits,
                                     fusion_total));
  }
  if (head_hits != head_total && (require_heads || head_hits != 0)) {
    throw DimensionError(fmt::format("weights hold {} of {} head tensors", head_hits, head_total));
  }
  known += fusion_hits + head_hits;
  if (known != c.size()) {
    throw DimensionError(fmt::format(
        "weights container has {} entries the model does not know (attribute count mismatch?)",
        c.size() - known));
  }
  return fusion_hits != 0;
}

}  // namespace vlmpar
