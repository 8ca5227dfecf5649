// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "vct/tape.hpp"

namespace vct {

// Entropy budget below which a prediction counts as reliable: a fixed
// fraction of the maximum possible entropy ln(num_classes).
double default_entropy_threshold(int num_classes);

// Reliability indicator per sample, strict comparison: a sample whose
// entropy equals the threshold is excluded.
std::vector<unsigned char> reliable_mask(const Tensor& entropies, double threshold);

// Plain (gradient-free) evaluation of the adaptation objective.
struct ObjectiveEval {
  Tensor entropies;                 // [b]
  std::vector<unsigned char> mask;  // reliable indicator per sample
  int reliable = 0;
  double loss = 0;  // mean entropy over reliable samples, 0 when none
};
ObjectiveEval eval_objective(const Tensor& logits, double threshold);

// One sharpness-aware gradient computation of the masked-entropy loss.
//
// `trace_entropies` records a forward pass on the given tape and returns
// per-sample entropies [b]. The reliability mask is frozen from the first
// pass. With radius > 0 and a nonzero gradient, the watched parameters are
// displaced by radius * g / ||g||2 (norm over the whole watched set), the
// loss is re-differentiated at the displaced point under the frozen mask,
// and the parameters are restored bit-exactly. radius == 0 returns the
// base gradients unchanged.
struct SamResult {
  GradMap grads;
  Tensor entropies;                 // first-pass entropies
  std::vector<unsigned char> mask;  // frozen reliability mask
  int reliable = 0;
  double loss = 0;       // first-pass masked mean entropy
  double grad_norm = 0;  // first-pass gradient norm over the watched set
  bool perturbed = false;
};
using TraceFn = std::function<Traced(GradTape&)>;
SamResult sam_step(const TraceFn& trace_entropies, ParamSet& watched, double threshold, double radius);

}  // namespace vct
