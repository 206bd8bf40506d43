#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlmpar/dataset.hpp"
#include "vlmpar/heads.hpp"
#include "vlmpar/model.hpp"

namespace vlmpar {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries where both gradients fall below this magnitude count as exact.
  double abs_floor = 1e-8;
  /// Upper bound on checked entries per tensor; 0 checks all of them.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Test hook: perturbs one analytic gradient entry before comparing.
  bool corrupt_gradient = false;
};

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares forward_backward against central differences of batch_loss for
/// every trainable tensor present in the gradient set.
GradCheckResult gradient_check(const Model& model, const EncodedDataset& data,
                               const LossConfig& loss_cfg, AblationMode mode,
                               const GradCheckOptions& options);

/// A self-contained problem for gradient checking: seeded model, random
/// images and labels, and prompts of `prompt_length` random token ids.
struct GradCheckProblem {
  Model model;
  EncodedDataset data;
};

GradCheckProblem make_gradcheck_problem(const ModelConfig& cfg, std::uint64_t seed,
                                        std::size_t num_samples, std::size_t prompt_length);

}  // namespace vlmpar
