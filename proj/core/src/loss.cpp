// SPDX-License-Identifier: Apache-2.0
#include "vct/loss.hpp"

#include <cmath>

#include "vct/kernels.hpp"

namespace vct {

double default_entropy_threshold(int num_classes) {
  if (num_classes < 2) throw ConfigError("entropy threshold needs at least 2 classes");
  return 0.4 * std::log(static_cast<double>(num_classes));
}

std::vector<unsigned char> reliable_mask(const Tensor& entropies, double threshold) {
  if (entropies.rank() != 1) throw ShapeError("reliable_mask expects entropies [b], got " + entropies.shape_str());
  std::vector<unsigned char> mask(entropies.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = static_cast<double>(entropies.data()[i]) < threshold ? 1 : 0;
  return mask;
}

ObjectiveEval eval_objective(const Tensor& logits, double threshold) {
  ObjectiveEval ev;
  ev.entropies = kernels::entropy(logits).h;
  ev.mask = reliable_mask(ev.entropies, threshold);
  auto mm = kernels::masked_mean(ev.entropies, ev.mask);
  ev.reliable = mm.count;
  ev.loss = static_cast<double>(mm.out.at(0));
  return ev;
}

SamResult sam_step(const TraceFn& trace_entropies, ParamSet& watched, double threshold, double radius) {
  SamResult res;
  GradTape tape;
  Traced ent = trace_entropies(tape);
  if (ent.value.rank() != 1) throw ShapeError("sam_step expects per-sample entropies [b], got " + ent.value.shape_str());
  res.mask = reliable_mask(ent.value, threshold);
  Traced loss = tape.masked_mean(ent, res.mask);
  res.entropies = ent.value;
  res.loss = static_cast<double>(loss.value.at(0));
  for (unsigned char m : res.mask) res.reliable += m;
  if (watched.empty()) {
    tape.clear();
    return res;
  }

  res.grads = tape.backward(loss);
  res.grad_norm = global_l2_norm(watched, res.grads);
  if (radius == 0 || res.grad_norm == 0) return res;

  const std::vector<Tensor> saved = watched.snapshot();
  apply_step(watched, res.grads, radius / (res.grad_norm + 1e-12));
  GradTape second;
  Traced ent2 = trace_entropies(second);
  Traced loss2 = second.masked_mean(ent2, res.mask);  // frozen first-pass mask
  res.grads = second.backward(loss2);
  watched.restore(saved);
  res.perturbed = true;
  return res;
}

}  // namespace vct
