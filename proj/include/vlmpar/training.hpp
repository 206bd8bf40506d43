#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vlmpar/dataset.hpp"
#include "vlmpar/heads.hpp"
#include "vlmpar/model.hpp"

namespace vlmpar {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::kFull;
  /// Worker threads for per-sample forward/backward; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
};

/// d(loss)/d(logits) for attribute_loss evaluated at softmax(logits).
Tensor loss_logit_gradient(const Tensor& probs, std::size_t label, const LossConfig& cfg);

struct BatchResult {
  double loss = 0.0;
  /// No fusion entries in no_cross_attention mode.
  GradientSet grads;
};

/// Mean over the batch of the attribute-mean loss, with exact gradients for
/// every trainable tensor. Encoder features are constants.
BatchResult forward_backward(const Model& model, const EncodedDataset& data,
                             std::span<const std::size_t> batch, const LossConfig& loss_cfg,
                             AblationMode mode, std::size_t threads = 1);

/// Loss only, sharing forward_backward's reduction order.
double batch_loss(const Model& model, const EncodedDataset& data,
                  std::span<const std::size_t> batch, const LossConfig& loss_cfg,
                  AblationMode mode);

/// SGD or bias-corrected Adam over the tensors present in the gradient set.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg);

  void step(TrainableWeights& params, const GradientSet& grads);
  std::uint64_t steps() const { return steps_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  TrainConfig cfg_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;           // sample-mean training loss seen during the epoch
  double mean_accuracy = 0.0;  // on the training set after the epoch
  double f1 = 0.0;
};

/// Predicted class per sample and attribute.
std::vector<std::vector<std::size_t>> predict_labels(const Model& model,
                                                     const EncodedDataset& data,
                                                     AblationMode mode, std::size_t threads = 1);

std::vector<std::vector<std::size_t>> true_labels(const EncodedDataset& data);

/// Seeded, deterministic training of the trainable weights only. Batch order
/// per epoch comes from the seed; the encoder checksum is verified unchanged.
std::vector<EpochRecord> train(Model& model, const EncodedDataset& data,
                               const TrainConfig& train_cfg, const LossConfig& loss_cfg);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace vlmpar
