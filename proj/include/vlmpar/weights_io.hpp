#pragma once

#include "vlmpar/container.hpp"
#include "vlmpar/model.hpp"

namespace vlmpar {

/// VLMW container with "encoder.<name>" for every frozen tensor, then the
/// trainable tensors by their own names ("fusion.<i>.*" only when
/// `include_fusion`, "head.<i>.*" always).
TensorContainer model_container(const Model& model, bool include_fusion);

/// Copies every tensor the container provides into `model`, checking shapes.
/// Encoder tensors are all-or-nothing; heads must be present when
/// `require_heads`. Returns true when the container carried fusion blocks.
bool apply_container(Model& model, const TensorContainer& c, bool require_heads);

}  // namespace vlmpar
